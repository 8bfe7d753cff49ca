//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "RSPLTCK\0"
//! version    u32      currently 1
//! kind       u8       0 = full trainer, 1 = actor only
//! obs_dim    u32
//! act_dim    u32
//! hidden     u32
//! [kind 0]   trainer header:
//!            f64 x 9   actor_lr critic_lr gamma tau target_noise noise_clip
//!                      sigma_start sigma_end sigma
//!            u64 x 4   policy_delay batch_size buffer_capacity updates
//!            u64 x 3   Adam step counts (actor, critic1, critic2)
//!            32 bytes  generator seed, u64 stream, u128 word position
//! count      u32      number of tensors
//! tensors    repeated: u16 name length, UTF-8 name, u64 element count,
//!            that many f64 values
//! ```
//!
//! Tensor order for a full trainer: `actor`, `actor_target`, `critic1`,
//! `critic2`, `critic1_target`, `critic2_target`, `actor_adam_m`,
//! `actor_adam_v`, `critic1_adam_m`, `critic1_adam_v`, `critic2_adam_m`,
//! `critic2_adam_v`. An actor-only file holds just `actor`. Each network
//! tensor is the flat parameter vector in [`MlpSpec::layout`] order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{Adam, AdamConfig};
use crate::nn::{Mlp, MlpSpec};
use crate::td3::{Td3Agent, Td3Config};
use crate::{PolicyError, ACT_DIM, OBS_DIM};

pub const MAGIC: &[u8; 8] = b"RSPLTCK\0";
pub const VERSION: u32 = 1;
const KIND_TRAINER: u8 = 0;
const KIND_ACTOR: u8 = 1;

const TRAINER_TENSORS: [&str; 12] = [
    "actor",
    "actor_target",
    "critic1",
    "critic2",
    "critic1_target",
    "critic2_target",
    "actor_adam_m",
    "actor_adam_v",
    "critic1_adam_m",
    "critic1_adam_v",
    "critic2_adam_m",
    "critic2_adam_v",
];

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, name: &str, values: &[f64]) {
        self.u16(name.len() as u16);
        self.0.extend_from_slice(name.as_bytes());
        self.u64(values.len() as u64);
        for &v in values {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PolicyError::Malformed(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], PolicyError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, PolicyError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, PolicyError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, PolicyError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, PolicyError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128, PolicyError> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, PolicyError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn tensor(&mut self, expected_name: &str, expected_len: usize) -> Result<Vec<f64>, PolicyError> {
        let name_len = self.u16()? as usize;
        let name = self.take(name_len)?;
        if name != expected_name.as_bytes() {
            return Err(PolicyError::Malformed(format!(
                "expected tensor {expected_name}, found {}",
                String::from_utf8_lossy(name)
            )));
        }
        let len = self.u64()? as usize;
        if len != expected_len {
            return Err(PolicyError::Shape(format!("tensor {expected_name} has {len} values, expected {expected_len}")));
        }
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| PolicyError::Malformed("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
    }
}

/// Layer sizes recorded in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: usize,
}

fn write_header(w: &mut Writer, kind: u8, hidden: usize) {
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(kind);
    w.u32(OBS_DIM as u32);
    w.u32(ACT_DIM as u32);
    w.u32(hidden as u32);
}

fn read_header(r: &mut Reader, expected_kind: u8, expected_hidden: Option<usize>) -> Result<Architecture, PolicyError> {
    if r.buf.len() < MAGIC.len() || &r.buf[..MAGIC.len()] != MAGIC {
        return Err(PolicyError::BadMagic);
    }
    r.take(MAGIC.len())?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(PolicyError::Version(version));
    }
    let kind = r.u8()?;
    if kind != expected_kind {
        return Err(PolicyError::Malformed(format!("checkpoint kind {kind}, expected {expected_kind}")));
    }
    let arch = Architecture {
        obs_dim: r.u32()? as usize,
        act_dim: r.u32()? as usize,
        hidden: r.u32()? as usize,
    };
    if arch.obs_dim != OBS_DIM || arch.act_dim != ACT_DIM {
        return Err(PolicyError::Shape(format!(
            "checkpoint dims {}x{}, expected {OBS_DIM}x{ACT_DIM}",
            arch.obs_dim, arch.act_dim
        )));
    }
    if let Some(h) = expected_hidden {
        if h != arch.hidden {
            return Err(PolicyError::Shape(format!("checkpoint hidden width {}, expected {h}", arch.hidden)));
        }
    }
    if arch.hidden == 0 {
        return Err(PolicyError::Shape("hidden width 0".into()));
    }
    Ok(arch)
}

/// Serializes the full trainer.
pub fn encode_trainer(agent: &Td3Agent) -> Vec<u8> {
    let c = &agent.config;
    let mut w = Writer(Vec::new());
    write_header(&mut w, KIND_TRAINER, c.hidden);
    for v in [
        c.actor_lr,
        c.critic_lr,
        c.gamma,
        c.tau,
        c.target_noise,
        c.noise_clip,
        c.sigma_start,
        c.sigma_end,
        agent.sigma,
    ] {
        w.f64(v);
    }
    for v in [c.policy_delay, c.batch_size as u64, c.buffer_capacity as u64, agent.updates] {
        w.u64(v);
    }
    for opt in [&agent.actor_opt, &agent.critic1_opt, &agent.critic2_opt] {
        w.u64(opt.t);
    }
    w.0.extend_from_slice(&agent.rng.get_seed());
    w.u64(agent.rng.get_stream());
    w.u128(agent.rng.get_word_pos());

    let tensors: [&[f64]; 12] = [
        agent.actor.params(),
        agent.actor_target.params(),
        agent.critic1.params(),
        agent.critic2.params(),
        agent.critic1_target.params(),
        agent.critic2_target.params(),
        &agent.actor_opt.m,
        &agent.actor_opt.v,
        &agent.critic1_opt.m,
        &agent.critic1_opt.v,
        &agent.critic2_opt.m,
        &agent.critic2_opt.v,
    ];
    w.u32(tensors.len() as u32);
    for (name, values) in TRAINER_TENSORS.iter().zip(tensors) {
        w.tensor(name, values);
    }
    w.0
}

/// Rebuilds a trainer. `expected_hidden`, when given, must match the header.
pub fn decode_trainer(bytes: &[u8], expected_hidden: Option<usize>) -> Result<Td3Agent, PolicyError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let arch = read_header(&mut r, KIND_TRAINER, expected_hidden)?;
    let mut f = [0.0; 9];
    for v in &mut f {
        *v = r.f64()?;
    }
    let mut u = [0u64; 4];
    for v in &mut u {
        *v = r.u64()?;
    }
    let mut steps = [0u64; 3];
    for v in &mut steps {
        *v = r.u64()?;
    }
    let seed: [u8; 32] = r.array()?;
    let stream = r.u64()?;
    let word_pos = r.u128()?;

    let config = Td3Config {
        hidden: arch.hidden,
        actor_lr: f[0],
        critic_lr: f[1],
        gamma: f[2],
        tau: f[3],
        target_noise: f[4],
        noise_clip: f[5],
        sigma_start: f[6],
        sigma_end: f[7],
        policy_delay: u[0],
        batch_size: u[1] as usize,
        buffer_capacity: u[2] as usize,
    };
    config
        .validate()
        .map_err(|e| PolicyError::Malformed(format!("stored configuration invalid: {e}")))?;

    let count = r.u32()? as usize;
    if count != TRAINER_TENSORS.len() {
        return Err(PolicyError::Malformed(format!("{count} tensors, expected {}", TRAINER_TENSORS.len())));
    }
    let a_spec = config.actor_spec();
    let c_spec = config.critic_spec();
    let (na, nc) = (a_spec.num_params(), c_spec.num_params());
    let lens = [na, na, nc, nc, nc, nc, na, na, nc, nc, nc, nc];
    let mut tensors = Vec::with_capacity(lens.len());
    for (name, len) in TRAINER_TENSORS.iter().zip(lens) {
        tensors.push(r.tensor(name, len)?);
    }
    if r.pos != bytes.len() {
        return Err(PolicyError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked");
    let net = |spec: MlpSpec, p: Vec<f64>| Mlp::from_params(spec, p).expect("length checked");
    let actor = net(a_spec, next());
    let actor_target = net(a_spec, next());
    let critic1 = net(c_spec, next());
    let critic2 = net(c_spec, next());
    let critic1_target = net(c_spec, next());
    let critic2_target = net(c_spec, next());
    let mut opt = |lr: f64, t: u64| Adam {
        config: AdamConfig::with_lr(lr),
        m: next(),
        v: next(),
        t,
    };
    let actor_opt = opt(config.actor_lr, steps[0]);
    let critic1_opt = opt(config.critic_lr, steps[1]);
    let critic2_opt = opt(config.critic_lr, steps[2]);

    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    Ok(Td3Agent {
        config,
        actor,
        actor_target,
        critic1,
        critic2,
        critic1_target,
        critic2_target,
        actor_opt,
        critic1_opt,
        critic2_opt,
        updates: u[3],
        sigma: f[8],
        rng,
    })
}

/// Serializes only the online actor, for deployment.
pub fn encode_actor(actor: &Mlp) -> Vec<u8> {
    let spec = actor.spec();
    let mut w = Writer(Vec::new());
    write_header(&mut w, KIND_ACTOR, spec.hidden);
    w.u32(1);
    w.tensor("actor", actor.params());
    w.0
}

pub fn decode_actor(bytes: &[u8], expected_hidden: Option<usize>) -> Result<Mlp, PolicyError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let arch = read_header(&mut r, KIND_ACTOR, expected_hidden)?;
    let spec = MlpSpec {
        input: OBS_DIM,
        hidden: arch.hidden,
        output: ACT_DIM,
        tanh_output: true,
    };
    if r.u32()? != 1 {
        return Err(PolicyError::Malformed("actor file must hold one tensor".into()));
    }
    let params = r.tensor("actor", spec.num_params())?;
    if r.pos != bytes.len() {
        return Err(PolicyError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Mlp::from_params(spec, params).expect("length checked"))
}

pub fn save_trainer(agent: &Td3Agent, path: &Path) -> Result<(), PolicyError> {
    Ok(fs::write(path, encode_trainer(agent))?)
}

pub fn load_trainer(path: &Path, expected_hidden: Option<usize>) -> Result<Td3Agent, PolicyError> {
    decode_trainer(&fs::read(path)?, expected_hidden)
}

pub fn save_actor(actor: &Mlp, path: &Path) -> Result<(), PolicyError> {
    Ok(fs::write(path, encode_actor(actor))?)
}

/// Loads an actor from either an actor-only file or a full trainer file.
pub fn load_actor(path: &Path, expected_hidden: Option<usize>) -> Result<Mlp, PolicyError> {
    let bytes = fs::read(path)?;
    match bytes.get(MAGIC.len() + 4) {
        Some(&KIND_TRAINER) => decode_trainer(&bytes, expected_hidden).map(|a| a.actor),
        _ => decode_actor(&bytes, expected_hidden),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> Td3Agent {
        Td3Agent::new(
            Td3Config {
                hidden: 8,
                ..Td3Config::default()
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn trainer_roundtrip_is_exact() {
        let mut a = agent();
        a.random_actions(3);
        a.updates = 17;
        a.sigma = 0.042;
        let bytes = encode_trainer(&a);
        let mut b = decode_trainer(&bytes, Some(8)).unwrap();
        assert_eq!(encode_trainer(&b), bytes);
        assert_eq!(a.actor, b.actor);
        assert_eq!(b.updates, 17);
        assert_eq!(a.random_actions(2), b.random_actions(2));
    }

    #[test]
    fn header_errors_are_structured() {
        let bytes = encode_trainer(&agent());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_trainer(&bad, None), Err(PolicyError::BadMagic)));
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(decode_trainer(&ver, None), Err(PolicyError::Version(9))));
        assert!(matches!(decode_trainer(&bytes, Some(256)), Err(PolicyError::Shape(_))));
        assert!(matches!(decode_trainer(&bytes[..bytes.len() - 3], None), Err(PolicyError::Malformed(_))));
    }

    #[test]
    fn actor_export_roundtrip() {
        let a = agent();
        let bytes = encode_actor(&a.actor);
        assert_eq!(decode_actor(&bytes, None).unwrap(), a.actor);
        assert!(decode_actor(&encode_trainer(&a), None).is_err());
    }
}
