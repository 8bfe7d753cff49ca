use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resplit_core::admm::SolverConfig;
use resplit_core::env::{
    decode_action, elect, heuristic_actions, EnvConfig, RawAction, ResplitEnv, GATE_THRESHOLD, OBS_DIM,
};
use resplit_core::problem::{make_instance, GeneratorConfig, ProblemInstance, ScaleClass};

fn instance(seed: u64) -> ProblemInstance {
    make_instance(seed, 0.2, ScaleClass::Short, &GeneratorConfig::default(), &SolverConfig::default()).unwrap()
}

fn random_raw(rng: &mut ChaCha8Rng, spread: f64) -> RawAction {
    RawAction(std::array::from_fn(|_| rng.gen_range(-spread..spread)))
}

#[test]
fn decoded_commands_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..100_000 {
        // a third of the draws fall outside the nominal box to exercise clamping
        let spread = if k % 3 == 0 { 3.0 } else { 1.0 };
        let cmd = decode_action(&random_raw(&mut rng, spread));
        assert!((0.1..=0.9).contains(&cmd.spatial));
        assert!((0.1..=0.9).contains(&cmd.time_ratio));
        assert!((0.0..=0.3).contains(&cmd.inflation));
        assert!((-1.0..=1.0).contains(&cmd.gate));
    }
}

#[test]
fn election_picks_at_most_one_maximal_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let mut actions: Vec<RawAction> = (0..n).map(|_| random_raw(&mut rng, 1.0)).collect();
        if rng.gen_bool(0.2) {
            // force exact ties
            let g = actions[0].0[0];
            for a in actions.iter_mut().step_by(2) {
                a.0[0] = g;
            }
        }
        match elect(&actions, GATE_THRESHOLD) {
            Some(w) => {
                let g = actions[w].gate();
                assert!(g > GATE_THRESHOLD);
                assert!(actions.iter().all(|a| a.gate() <= g));
                assert!(actions[..w].iter().all(|a| a.gate() < g));
            }
            None => assert!(actions.iter().all(|a| a.gate() <= GATE_THRESHOLD)),
        }
    }
}

#[test]
fn observations_have_fixed_width_and_split_count_moves_by_at_most_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = instance(3);
    let (mut env, obs) = ResplitEnv::reset(EnvConfig::default(), &inst, 1.0).unwrap();
    assert_eq!(obs.len(), inst.num_segments());
    while !env.is_done() {
        let n = env.num_agents();
        let actions: Vec<RawAction> = (0..n).map(|_| random_raw(&mut rng, 1.0)).collect();
        let qualifies = actions.iter().any(|a| a.gate() > GATE_THRESHOLD);
        let out = env.step(&actions).unwrap();
        let grown = env.num_agents() - n;
        assert!(grown <= 1);
        if !qualifies {
            assert_eq!(grown, 0);
        }
        if grown == 1 {
            assert!(out.info.winner.is_some() && !out.info.split_rejected);
        }
        assert_eq!(out.observations.len(), env.num_agents());
        assert_eq!(out.rewards.len(), env.num_agents());
        assert_eq!(out.info.successor.len(), n);
        for o in &out.observations {
            assert_eq!(o.len(), OBS_DIM);
            assert!(o.iter().all(|v| v.is_finite()));
            assert!(o[3] > -1.0 && o[3] < 1.0);
            assert!(o[5] > -1.0 && o[5] < 1.0);
            assert_eq!(o[6..], out.observations[0][6..]);
        }
        assert!((out.observations[0][10] - env.num_agents() as f64 / env.n_max() as f64).abs() < 1e-15);
    }
}

#[test]
fn rewards_decompose_into_shared_and_winner_terms() {
    let inst = instance(4);
    let (mut env, _) = ResplitEnv::reset(EnvConfig::default(), &inst, 0.7).unwrap();
    let mut saw_split = false;
    while !env.is_done() {
        let actions = heuristic_actions(&env);
        let out = env.step(&actions).unwrap();
        let r_sys = out.info.system.total();
        for (i, r) in out.rewards.iter().enumerate() {
            let winner_after = out.info.winner.map(|w| out.info.successor[w]);
            match (winner_after, out.info.action) {
                (Some(w), Some(act)) if w == i => {
                    saw_split = true;
                    assert_eq!(*r, r_sys + act.total());
                    assert_eq!(act.split, -env.config().reward.lambda4);
                }
                _ => assert_eq!(*r, r_sys),
            }
        }
    }
    assert!(saw_split);
}

#[test]
fn guidance_rewards_shifting_away_from_the_busier_side() {
    let mut checked = 0;
    for seed in 0..8 {
        let inst = instance(seed);
        let (mut env, obs) = ResplitEnv::reset(EnvConfig::default(), &inst, 1.0).unwrap();
        // the agent whose right side lags the most
        let Some(i) = (0..obs.len()).filter(|&i| obs[i][5] > 0.0).max_by(|&a, &b| obs[a][5].total_cmp(&obs[b][5]))
        else {
            continue;
        };
        let mut actions = vec![RawAction::new(-1.0, 0.0, 0.0, -1.0); obs.len()];
        actions[i] = RawAction::new(1.0, -0.5, -0.5, -1.0);
        let out = env.step(&actions).unwrap();
        if let Some(act) = out.info.action {
            assert!(act.guidance >= 0.0, "guidance {}", act.guidance);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn masked_inflation_never_stretches() {
    let inst = instance(6);
    let cfg = EnvConfig {
        mask_inflation: true,
        ..EnvConfig::default()
    };
    let (mut env, _) = ResplitEnv::reset(cfg, &inst, 0.0).unwrap();
    let total = env.solver().segments().iter().map(|s| s.segment().duration()).sum::<f64>();
    for _ in 0..3 {
        if env.is_done() {
            break;
        }
        let mut actions = vec![RawAction::new(-1.0, 0.0, 0.0, 1.0); env.num_agents()];
        actions[0].0[0] = 1.0;
        let out = env.step(&actions).unwrap();
        if let Some(cmd) = out.info.command {
            assert_eq!(cmd.inflation, 0.0);
        }
    }
    let after = env.solver().segments().iter().map(|s| s.segment().duration()).sum::<f64>();
    assert!((after - total).abs() < 1e-9 * total);
}

#[test]
fn stepping_a_finished_episode_errors() {
    let inst = instance(1);
    let (mut env, _) = ResplitEnv::reset(EnvConfig::default(), &inst, 0.0).unwrap();
    while !env.is_done() {
        let actions = vec![RawAction::new(-1.0, 0.0, 0.0, 0.0); env.num_agents()];
        env.step(&actions).unwrap();
    }
    let actions = vec![RawAction::new(-1.0, 0.0, 0.0, 0.0); env.num_agents()];
    assert!(env.step(&actions).is_err());
}

#[test]
fn fixed_structure_episode_matches_the_baseline_count() {
    let inst = instance(2);
    let (mut env, _) = ResplitEnv::reset(EnvConfig::default(), &inst, 0.0).unwrap();
    let mut last = None;
    while !env.is_done() {
        let actions = vec![RawAction::new(-1.0, 0.0, 0.0, 0.0); env.num_agents()];
        last = Some(env.step(&actions).unwrap());
    }
    let status = env.status();
    if status.converged {
        assert_eq!(Some(status.iteration), inst.k_base);
        let out = last.unwrap();
        let rc = &env.config().reward;
        assert_eq!(out.info.system.terminal, rc.r_conv);
    }
    assert_eq!(env.splits(), 0);
}
