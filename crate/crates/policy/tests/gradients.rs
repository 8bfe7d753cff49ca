use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resplit_policy::nn::{concat_cols, Mlp, MlpSpec};
use resplit_policy::td3::{actor_loss_grad, critic_loss_grad};
use resplit_policy::{ACT_DIM, OBS_DIM};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Randomizes layer-norm gains and offsets so their gradients are exercised
/// away from the identity initialization.
fn perturbed(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Mlp {
    let mut net = Mlp::new(spec, rng);
    for slot in spec.layout() {
        if slot.name.starts_with("ln") {
            for p in &mut net.params_mut()[slot.range()] {
                *p += rng.gen_range(-0.3..0.3);
            }
        }
    }
    net
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to the selected parameter indices.
fn fd_params(net: &Mlp, idx: &[usize], f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    idx.iter()
        .map(|&i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + H;
            let up = f(&probe);
            probe.params_mut()[i] = orig - H;
            let down = f(&probe);
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn weighted_output(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (net.forward(x.view()) * w).sum()
}

fn check_network(spec: MlpSpec, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = perturbed(spec, &mut rng);
    let x = random_matrix(&mut rng, 5, spec.input, 2.0);
    let w = random_matrix(&mut rng, 5, spec.output, 1.0);
    let cache = net.forward_cached(x.view());
    let mut grad = vec![0.0; net.params().len()];
    let dx = net.backward(&cache, w.view(), &mut grad);

    let all: Vec<usize> = (0..net.params().len()).collect();
    let fd = fd_params(&net, &all, |n| weighted_output(n, &x, &w));
    for slot in spec.layout() {
        let err = relative_error(&grad[slot.range()], &fd[slot.range()]);
        assert!(err < TOL, "seed {seed} tensor {}: relative error {err:e}", slot.name);
    }

    let mut fd_x = Array2::zeros(x.dim());
    for ((r, c), v) in fd_x.indexed_iter_mut() {
        let mut xp = x.clone();
        xp[[r, c]] += H;
        let up = weighted_output(&net, &xp, &w);
        xp[[r, c]] -= 2.0 * H;
        let down = weighted_output(&net, &xp, &w);
        *v = (up - down) / (2.0 * H);
    }
    let err = relative_error(dx.as_slice().unwrap(), fd_x.as_slice().unwrap());
    assert!(err < TOL, "seed {seed} input gradient: relative error {err:e}");
}

fn actor_spec(hidden: usize) -> MlpSpec {
    MlpSpec {
        input: OBS_DIM,
        hidden,
        output: ACT_DIM,
        tanh_output: true,
    }
}

fn critic_spec(hidden: usize) -> MlpSpec {
    MlpSpec {
        input: OBS_DIM + ACT_DIM,
        hidden,
        output: 1,
        tanh_output: false,
    }
}

#[test]
fn actor_network_gradients_match_finite_differences() {
    for seed in 0..10 {
        check_network(actor_spec(12), seed);
    }
}

#[test]
fn critic_network_gradients_match_finite_differences() {
    for seed in 100..110 {
        check_network(critic_spec(12), seed);
    }
}

#[test]
fn critic_loss_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for critic_seed in [seed * 2, seed * 2 + 1] {
            let critic = perturbed(critic_spec(12), &mut ChaCha8Rng::seed_from_u64(1000 + critic_seed));
            let obs = random_matrix(&mut rng, 6, OBS_DIM, 2.0);
            let act = random_matrix(&mut rng, 6, ACT_DIM, 1.0);
            let y = Array1::from_shape_fn(6, |_| rng.gen_range(-3.0..3.0));
            let (_, grad) = critic_loss_grad(&critic, obs.view(), act.view(), &y);
            let all: Vec<usize> = (0..critic.params().len()).collect();
            let fd = fd_params(&critic, &all, |c| critic_loss_grad(c, obs.view(), act.view(), &y).0);
            let err = relative_error(&grad, &fd);
            assert!(err < TOL, "seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn actor_loss_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let actor = perturbed(actor_spec(12), &mut rng);
        let critic = perturbed(critic_spec(12), &mut rng);
        let obs = random_matrix(&mut rng, 6, OBS_DIM, 2.0);
        let (_, grad) = actor_loss_grad(&actor, &critic, obs.view());
        let all: Vec<usize> = (0..actor.params().len()).collect();
        let fd = fd_params(&actor, &all, |a| actor_loss_grad(a, &critic, obs.view()).0);
        let err = relative_error(&grad, &fd);
        assert!(err < TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn concatenation_splits_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let critic = perturbed(critic_spec(12), &mut rng);
    let obs = random_matrix(&mut rng, 3, OBS_DIM, 1.0);
    let act = random_matrix(&mut rng, 3, ACT_DIM, 1.0);
    let joined = concat_cols(obs.view(), act.view());
    assert_eq!(joined.slice(s![.., ..OBS_DIM]), obs);
    assert_eq!(joined.slice(s![.., OBS_DIM..]), act);
    let cache = critic.forward_cached(joined.view());
    let ones = Array2::ones((3, 1));
    let mut scratch = vec![0.0; critic.params().len()];
    let d_in = critic.backward(&cache, ones.view(), &mut scratch);
    for r in 0..3 {
        for c in 0..ACT_DIM {
            let mut a2 = act.clone();
            a2[[r, c]] += H;
            let up = critic.forward(concat_cols(obs.view(), a2.view()).view()).sum();
            a2[[r, c]] -= 2.0 * H;
            let down = critic.forward(concat_cols(obs.view(), a2.view()).view()).sum();
            let fd = (up - down) / (2.0 * H);
            assert!((fd - d_in[[r, OBS_DIM + c]]).abs() <= TOL * fd.abs().max(1e-3));
        }
    }
}

#[test]
fn full_width_networks_match_on_sampled_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for spec in [actor_spec(256), critic_spec(256)] {
        let net = perturbed(spec, &mut rng);
        let x = random_matrix(&mut rng, 4, spec.input, 2.0);
        let w = random_matrix(&mut rng, 4, spec.output, 1.0);
        let cache = net.forward_cached(x.view());
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&cache, w.view(), &mut grad);
        let idx: Vec<usize> = spec
            .layout()
            .iter()
            .flat_map(|slot| (0..20).map(move |k| slot.offset + (k * 7919) % slot.len()))
            .collect();
        let fd = fd_params(&net, &idx, |n| weighted_output(n, &x, &w));
        let picked: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
        let err = relative_error(&picked, &fd);
        assert!(err < TOL, "hidden 256: relative error {err:e}");
    }
}
