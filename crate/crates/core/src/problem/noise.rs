//! Lattice gradient noise in two dimensions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classic permutation-table gradient noise with fractal octaves.
#[derive(Debug, Clone)]
pub struct GradientNoise {
    perm: [u8; 512],
    gradients: [[f64; 2]; 256],
}

impl GradientNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table: Vec<u8> = (0..=255).collect();
        table.shuffle(&mut rng);
        let mut perm = [0u8; 512];
        for (i, slot) in perm.iter_mut().enumerate() {
            *slot = table[i & 255];
        }
        let mut gradients = [[0.0; 2]; 256];
        for g in gradients.iter_mut() {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            *g = [angle.cos(), angle.sin()];
        }
        Self { perm, gradients }
    }

    #[inline]
    fn gradient(&self, ix: i64, iy: i64) -> [f64; 2] {
        let x = (ix & 255) as usize;
        let y = (iy & 255) as usize;
        self.gradients[self.perm[self.perm[x] as usize + y] as usize]
    }

    /// Single-octave noise, roughly in `[-1, 1]`, zero on lattice points.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (ix, iy) = (x0 as i64, y0 as i64);
        let fx = x - x0;
        let fy = y - y0;
        let corner = |dx: i64, dy: i64| {
            let g = self.gradient(ix + dx, iy + dy);
            g[0] * (fx - dx as f64) + g[1] * (fy - dy as f64)
        };
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let u = fade(fx);
        let v = fade(fy);
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        lerp(
            lerp(corner(0, 0), corner(1, 0), u),
            lerp(corner(0, 1), corner(1, 1), u),
            v,
        )
    }

    /// Sum of `octaves` layers, each at twice the frequency and half the amplitude.
    pub fn fractal(&self, x: f64, y: f64, octaves: usize) -> f64 {
        let mut total = 0.0;
        let mut amplitude = 1.0;
        let mut frequency = 1.0;
        for octave in 0..octaves {
            // offset each layer so lattice zeros do not line up
            let shift = 17.31 * octave as f64;
            total += amplitude * self.sample(x * frequency + shift, y * frequency - shift);
            amplitude *= 0.5;
            frequency *= 2.0;
        }
        total
    }
}
