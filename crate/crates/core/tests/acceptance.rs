//! Acceptance suite: one check per acceptance criterion, each printed as a
//! `[PASS]` or `[FAIL]` line with its measurements and wall time.
//!
//! Runs with `cargo test -p fireline-core --test acceptance`. Extra
//! arguments are substring filters on criterion names.

use std::fmt::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use fireline_core::agent::{greedy_valuation, Heuristic};
use fireline_core::bandit::{
    lipschitz_bai, mean_regret, regret_experiment, Algorithm, BanditConfig, TentOracle,
};
use fireline_core::grid::Density;
use fireline_core::grid::{self, GameInstance, GridState, Tile, TileStatus};
use fireline_core::harness::onestep::{
    one_step_value_check, worst_lipschitz_excess, RestrictedHuman,
};
use fireline_core::harness::sweep::{evaluate, Components};
use fireline_core::harness::{self, make_instance_pool, sweep_epsilon, EpisodeSeeds, PlayMode};
use fireline_core::human::HumanModel;
use fireline_core::rng;
use fireline_core::support::{
    action_set_distribution, lipschitz_constant_sets, sample_action_set, scale_minmax, EpsilonGrid,
    ScaledProfile, SupportConfig,
};
use rand::seq::IndexedRandom;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Verdict,
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria = [
        Criterion {
            name: "set-distribution-lipschitz",
            limit: secs(60),
            run: set_distribution_lipschitz,
        },
        Criterion {
            name: "distribution-sampler-agreement",
            limit: secs(60),
            run: distribution_sampler_agreement,
        },
        Criterion {
            name: "agency-endpoints",
            limit: secs(60),
            run: agency_endpoints,
        },
        Criterion {
            name: "one-step-value-lipschitz",
            limit: secs(60),
            run: one_step_value_lipschitz,
        },
        Criterion {
            name: "zooming-deterministic",
            limit: secs(60),
            run: zooming_deterministic,
        },
        Criterion {
            name: "regret-decay-and-dominance",
            limit: secs(600),
            run: regret_decay_and_dominance,
        },
        Criterion {
            name: "environment-physics",
            limit: secs(600),
            run: environment_physics,
        },
        Criterion {
            name: "complementarity-shape",
            limit: secs(900),
            run: complementarity_shape,
        },
        Criterion {
            name: "determinism",
            limit: secs(600),
            run: determinism,
        },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str())))
    {
        ran += 1;
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| Verdict::new(false, format!("panicked: {}", panic_message(&e))));
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = verdict.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            String::new()
        } else {
            format!("; exceeded {:?} limit", c.limit)
        };
        println!(
            "[{}] {} ({:.1}s): {}{}",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            verdict.detail,
            timing
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

/// A ranked scaled profile with `m` actions: top 1, bottom 0, the rest
/// uniform, sometimes snapped to a coarse grid to create ties.
fn random_profile<R: Rng>(rng: &mut R, m: usize) -> ScaledProfile {
    let snap = rng.random_bool(0.3);
    let mut qs: Vec<f64> = (0..m - 2)
        .map(|_| {
            let q: f64 = rng.random();
            if snap {
                (q * 20.0).round() / 20.0
            } else {
                q
            }
        })
        .collect();
    qs.push(1.0);
    qs.push(0.0);
    qs.sort_by(|a, b| b.total_cmp(a));
    ScaledProfile::from_ranked(
        qs.into_iter()
            .enumerate()
            .map(|(i, q)| (Tile(i / 10, i % 10), q))
            .collect(),
    )
    .expect("valid by construction")
}

fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

fn set_distribution_lipschitz() -> Verdict {
    let grid = EpsilonGrid::study();
    let mut rng = rng::stream(0xA1);
    let mut violations = 0usize;
    let mut pairs = 0usize;
    let mut worst_ratio = 0.0f64;
    for _ in 0..500 {
        let m = rng.random_range(2..=20);
        let profile = random_profile(&mut rng, m);
        for sigma in [0.005, 0.01, 0.05] {
            let lc = lipschitz_constant_sets(sigma);
            let dists: Vec<Vec<f64>> = grid
                .values()
                .iter()
                .map(|&e| action_set_distribution(&profile, &SupportConfig::new(e, sigma).unwrap()))
                .collect();
            for i in 0..dists.len() {
                for j in i + 1..dists.len() {
                    let gap = (grid.values()[i] - grid.values()[j]).abs();
                    let d = l1(&dists[i], &dists[j]);
                    pairs += 1;
                    if d > lc * gap + 1e-9 {
                        violations += 1;
                    }
                    worst_ratio = worst_ratio.max(d / (lc * gap));
                }
            }
        }
    }
    Verdict::new(
        violations == 0,
        format!("{violations} violations over {pairs} pairs; max l1/(L_c·|Δε|) = {worst_ratio:.4}"),
    )
}

fn distribution_sampler_agreement() -> Verdict {
    let mut rng = rng::stream(0xA2);
    let draws = 100_000;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(2..=20);
        let profile = random_profile(&mut rng, m);
        let sigma = *[0.005, 0.01, 0.05, 0.1].choose(&mut rng).unwrap();
        let config = SupportConfig::new(rng.random_range(0.0..0.3), sigma).unwrap();
        let exact = action_set_distribution(&profile, &config);
        let mut counts = vec![0usize; m];
        let mut sampler = rng::stream(rng.random());
        for _ in 0..draws {
            counts[sample_action_set(&profile, &config, &mut sampler).0.k() - 1] += 1;
        }
        for (c, p) in counts.iter().zip(&exact) {
            worst = worst.max((*c as f64 / draws as f64 - p).abs());
        }
    }
    Verdict::new(
        worst <= 0.01,
        format!("max |empirical - exact| = {worst:.5} over 50 configurations (limit 0.01)"),
    )
}

fn agency_endpoints() -> Verdict {
    let mut rng = rng::stream(0xA3);
    let mut full_exact = true;
    let mut full_sampled = true;
    for _ in 0..200 {
        let m = rng.random_range(2..=20);
        let profile = random_profile(&mut rng, m);
        for sigma in [0.005, 0.01, 0.05] {
            let config = SupportConfig::new(1.0, sigma).unwrap();
            let dist = action_set_distribution(&profile, &config);
            full_exact &= dist[m - 1] == 1.0 && dist[..m - 1].iter().all(|&p| p == 0.0);
            for _ in 0..50 {
                full_sampled &= sample_action_set(&profile, &config, &mut rng).0.k() == m;
            }
        }
    }

    let mut worst_freq = 1.0f64;
    for _ in 0..20 {
        let m = rng.random_range(2..=20);
        // second-best at most 0.95 so the top-two gap is at least 0.05
        let mut qs: Vec<f64> = (0..m - 1).map(|_| rng.random_range(0.0..=0.95)).collect();
        qs.push(1.0);
        qs.sort_by(|a, b| b.total_cmp(a));
        qs[m - 1] = 0.0;
        let profile = ScaledProfile::from_ranked(
            qs.into_iter()
                .enumerate()
                .map(|(i, q)| (Tile(0, i), q))
                .collect(),
        )
        .unwrap();
        let config = SupportConfig::new(0.0, 0.01).unwrap();
        let singles = (0..10_000)
            .filter(|_| sample_action_set(&profile, &config, &mut rng).0.k() == 1)
            .count();
        worst_freq = worst_freq.min(singles as f64 / 10_000.0);
    }
    Verdict::new(
        full_exact && full_sampled && worst_freq >= 0.999,
        format!(
            "eps=1: exact full-set probability 1 = {full_exact}, all sampled sets full = {full_sampled}; \
             eps=0 singleton frequency min {worst_freq:.4} (limit 0.999)"
        ),
    )
}

/// Exact expected immediate reward of extinguishing each candidate.
fn expected_rewards(state: &GridState, actions: &[Tile]) -> Vec<f64> {
    actions
        .iter()
        .map(|&a| {
            let mut after = state.clone();
            after.set_status(a, TileStatus::Burnt);
            -after
                .tiles()
                .filter(|&t| after.status(t).is_healthy())
                .map(|t| {
                    let n = after
                        .neighbors(t)
                        .filter(|&nb| after.status(nb).is_burning())
                        .count();
                    1.0 - (1.0 - after.density(t).p()).powi(n as i32)
                })
                .sum::<f64>()
        })
        .collect()
}

fn one_step_value_lipschitz() -> Verdict {
    let grid = EpsilonGrid::study();
    let sigmas = [0.005, 0.01, 0.05];
    let mut rng = rng::stream(0xA4);
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut pairs = 0;

    // synthetic one-step games
    for i in 0..100 {
        let m = rng.random_range(2..=20);
        let profile = random_profile(&mut rng, m);
        let rewards: Vec<f64> = (0..m).map(|_| -rng.random_range(0.0..10.0)).collect();
        let human = if i % 2 == 0 {
            RestrictedHuman::Greedy((0..m).map(|_| rng.random()).collect())
        } else {
            RestrictedHuman::Uniform
        };
        let sigma = sigmas[i % 3];
        let r_max = rewards.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let table = one_step_value_check(&rewards, &profile, &human, &grid, sigma).unwrap();
        worst = worst.max(worst_lipschitz_excess(
            &table,
            lipschitz_constant_sets(sigma) * r_max,
        ));
        checked += 1;
        pairs += table.len() * (table.len() - 1) / 2;
    }

    // the first decision of generated games, ended after one action
    let mut seed = 0u64;
    while checked < 200 {
        seed += 1;
        let inst = grid::gen_instance(seed, 3).unwrap();
        let state = &inst.initial_state;
        let q = greedy_valuation(state, 7).unwrap();
        let scaled = scale_minmax(&q).unwrap();
        if scaled.len() < 2 {
            continue;
        }
        let ranked: Vec<Tile> = scaled.ranked().iter().map(|&(t, _)| t).collect();
        let rewards = expected_rewards(state, &ranked);
        let human_q = greedy_valuation(state, 1).unwrap();
        let human = if seed % 2 == 0 {
            RestrictedHuman::Greedy(
                ranked
                    .iter()
                    .map(|&t| human_q.value_of(t).unwrap())
                    .collect(),
            )
        } else {
            RestrictedHuman::Uniform
        };
        let sigma = sigmas[seed as usize % 3];
        let r_max = rewards.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let table = one_step_value_check(&rewards, &scaled, &human, &grid, sigma).unwrap();
        worst = worst.max(worst_lipschitz_excess(
            &table,
            lipschitz_constant_sets(sigma) * r_max,
        ));
        checked += 1;
        pairs += table.len() * (table.len() - 1) / 2;
    }
    Verdict::new(
        worst <= 1e-9,
        format!(
            "{checked} one-step games, {pairs} pairs; worst |Δv| - L_c·r_max·|Δε| = {worst:.3e}"
        ),
    )
}

fn zooming_deterministic() -> Verdict {
    let mut detail = String::new();
    let mut pass = true;
    for peak in [0.1, 0.25, 0.3, 0.7] {
        let oracle = move |e: f64, _: &mut dyn rand::RngCore| 1.0 - (e - peak).abs();
        let cfg = BanditConfig::new(100_000, 1.0, 2.0).unwrap();
        let (eps_opt, trace) = lipschitz_bai(&oracle, &cfg, &mut rng::stream(5)).unwrap();
        let k = trace.last_iteration();
        let survives = trace.iterations.iter().all(|it| {
            it.intervals
                .iter()
                .any(|iv| iv.lo <= peak && peak <= iv.hi && !it.eliminated.contains(iv))
        });
        let err = (eps_opt - peak).abs();
        let ok = k >= 6 && err <= (-f64::from(k)).exp2() && survives;
        pass &= ok;
        let _ = write!(
            detail,
            "eps*={peak}: K={k} eps_opt={eps_opt:.6} |err|={err:.2e} survives={survives}; "
        );
    }
    Verdict::new(pass, detail.trim_end_matches("; ").to_string())
}

fn regret_decay_and_dominance() -> Verdict {
    let oracle = TentOracle::new(0.3, 0.8, 0.5, 0.2).unwrap();
    let budgets = [1_000, 3_000, 10_000, 30_000];
    let seeds: Vec<u64> = (0..100).collect();
    let rows = regret_experiment(&oracle, &budgets, &seeds, 1.0, 1.0, 100).unwrap();
    let zoom = mean_regret(&rows, Algorithm::Zooming, &budgets);
    let unif = mean_regret(&rows, Algorithm::Uniform, &budgets);
    let decreasing = zoom.windows(2).all(|w| w[1] < w[0]);
    let dominates = zoom.iter().zip(&unif).all(|(z, u)| z <= u);

    // reported for reference: the exploitation parameter of the game study
    let rows2 = regret_experiment(&oracle, &budgets, &seeds, 1.0, 2.0, 100).unwrap();
    let zoom2 = mean_regret(&rows2, Algorithm::Zooming, &budgets);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Verdict::new(
        decreasing && dominates,
        format!(
            "L=1, beta=1: zooming [{}] uniform [{}]; strictly decreasing = {decreasing}, dominates = {dominates} \
             (beta=2 for reference: [{}])",
            fmt(&zoom),
            fmt(&unif),
            fmt(&zoom2)
        ),
    )
}

fn ignition_frequency(p_level: u8, n: usize, trials: usize, seed: u64) -> f64 {
    // 3x3 grid: healthy centre, `n` burning orthogonal neighbours, and a
    // burning corner that is extinguished every step
    let mut statuses = vec![TileStatus::Burnt; 9];
    statuses[4] = TileStatus::Healthy;
    statuses[0] = TileStatus::Burning(3);
    for &i in [1, 3, 5, 7].iter().take(n) {
        statuses[i] = TileStatus::Burning(3);
    }
    let mut densities = vec![Density::from_level(5).unwrap(); 9];
    densities[4] = Density::from_level(p_level).unwrap();
    let state = GridState::new(3, 3, densities, statuses).unwrap();
    let mut rng = rng::stream(seed);
    let ignited = (0..trials)
        .filter(|_| {
            let out = grid::step(&state, Tile(0, 0), &mut rng).unwrap();
            out.next_state.status(Tile(1, 1)).is_burning()
        })
        .count();
    ignited as f64 / trials as f64
}

fn environment_physics() -> Verdict {
    let mut worst_dev = 0.0f64;
    for level in 1..=9u8 {
        for n in 1..=4usize {
            let p = f64::from(level) / 10.0;
            let freq = ignition_frequency(level, n, 100_000, u64::from(level) * 10 + n as u64);
            worst_dev = worst_dev.max((freq - (1.0 - (1.0 - p).powi(n as i32))).abs());
        }
    }

    let mut max_steps = 0usize;
    let mut accounting = true;
    let mut burnout = true;
    let mut rng = rng::stream(0xA7);
    for seed in 0..1000u64 {
        let inst = grid::gen_instance(seed, 3).unwrap();
        let mut state = inst.initial_state.clone();
        let initial_healthy = state.count_healthy();
        let mut burned = 0i64;
        let mut steps = 0usize;
        // step at which each tile ignited during play, if still unmitigated
        let mut ignited_at: Vec<Option<usize>> = vec![None; state.cells()];
        while !state.is_terminal() {
            let cands = grid::candidate_actions(&state).unwrap();
            let a = *cands.choose(&mut rng).unwrap();
            ignited_at[a.0 * state.width() + a.1] = None;
            let out = grid::step(&state, a, &mut rng).unwrap();
            steps += 1;
            burned -= i64::from(out.reward);
            for t in &out.newly_burning {
                ignited_at[t.0 * state.width() + t.1] = Some(steps);
            }
            state = out.next_state;
            for (i, at) in ignited_at.iter_mut().enumerate() {
                if let Some(s) = *at {
                    let status = state.statuses()[i];
                    let expected_burnt = steps - s >= 3;
                    if expected_burnt != (status == TileStatus::Burnt) {
                        burnout = false;
                    }
                    if expected_burnt {
                        *at = None;
                    }
                }
            }
            if steps > 300 {
                break;
            }
        }
        max_steps = max_steps.max(steps);
        accounting &= burned as usize == initial_healthy - grid::score(&state);
    }
    Verdict::new(
        worst_dev <= 0.005 && burnout && max_steps <= 300 && accounting,
        format!(
            "ignition max deviation {worst_dev:.5} over 36 (p, n) pairs (limit 0.005); burn-out after 3 steps = {burnout}; \
             longest of 1000 rollouts {max_steps} steps (limit 300); reward accounting = {accounting}"
        ),
    )
}

fn output_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("create acceptance output dir");
    dir
}

fn complementarity_shape() -> Verdict {
    let pool = make_instance_pool(50, 2024, 3).unwrap();
    let components =
        Components::new(Heuristic::greedy(7), "softmax:1:1".parse().unwrap(), 0.01).unwrap();
    let sweep = sweep_epsilon(&pool, &EpsilonGrid::study(), 200, &components, 7).unwrap();

    let path = output_dir().join("complementarity.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    for p in &sweep.points {
        w.serialize(p).unwrap();
    }
    w.flush().unwrap();

    let at0 = sweep.at(0.0).unwrap();
    let at1 = sweep.at(1.0).unwrap();
    let best = sweep
        .points
        .iter()
        .max_by(|a, b| a.mean_payoff.total_cmp(&b.mean_payoff))
        .unwrap();
    let margin = at0.mean_payoff - at1.mean_payoff;
    let combined = at0.payoff_ci + at1.payoff_ci;
    Verdict::new(
        margin > combined,
        format!(
            "payoff eps=0 {:.4}±{:.4}, eps=1 {:.4}±{:.4}, margin {margin:.4} vs combined CI {combined:.4}; \
             best eps {:.2} at {:.4}; curve written to {}",
            at0.mean_payoff,
            at0.payoff_ci,
            at1.mean_payoff,
            at1.payoff_ci,
            best.epsilon.unwrap(),
            best.mean_payoff,
            path.display()
        ),
    )
}

fn determinism() -> Verdict {
    let pool: Vec<GameInstance> = make_instance_pool(10, 77, 3).unwrap();
    let agents = [
        Heuristic::greedy(7),
        Heuristic::softmax(2, 0.5),
        Heuristic::Random,
    ];
    let humans = HumanModel::default_panel();
    let mut logs = 0;
    let mut identical = true;
    for j in 0..60u64 {
        let inst = &pool[j as usize % pool.len()];
        let agent = agents[j as usize % agents.len()];
        let human = &humans[j as usize % humans.len()];
        let seeds = EpisodeSeeds::from_master(j);
        let mode = match j % 4 {
            0 => PlayMode::Unassisted,
            1 => PlayMode::Autonomous,
            _ => PlayMode::Assisted(SupportConfig::new((j % 10) as f64 / 10.0, 0.01).unwrap()),
        };
        let log = harness::run_mode(inst, mode, agent, human, seeds).unwrap();
        let text = log.to_jsonl();
        let again = harness::replay(
            inst,
            &harness::EpisodeLog::read_jsonl(text.as_bytes()).unwrap(),
        )
        .unwrap();
        identical &= again.to_jsonl() == text && log.validate().is_ok();
        logs += 1;
    }
    // parallel evaluation must not depend on scheduling
    let components = Components::new(Heuristic::greedy(7), humans[1].clone(), 0.01).unwrap();
    let mode = PlayMode::Assisted(SupportConfig::new(0.2, 0.01).unwrap());
    let a = evaluate(&pool, mode, 40, &components, 3).unwrap();
    let b = evaluate(&pool, mode, 40, &components, 3).unwrap();
    identical &= a == b;

    let mut traces_identical = true;
    let oracle = TentOracle::new(0.3, 0.8, 0.5, 0.2).unwrap();
    for seed in 0..10 {
        let cfg = BanditConfig::new(20_000, 1.0, 2.0).unwrap();
        let trace = |s| {
            let (_, t) = lipschitz_bai(&oracle, &cfg, &mut rng::stream(s)).unwrap();
            let mut buf = Vec::new();
            t.write_jsonl(&mut buf).unwrap();
            buf
        };
        traces_identical &= trace(seed) == trace(seed);
    }
    let game = harness::GameOracle::new(pool.clone(), components).unwrap();
    let cfg = BanditConfig::new(300, 150.0, 2.0).unwrap();
    let (e1, t1) = lipschitz_bai(&game, &cfg, &mut rng::stream(9)).unwrap();
    let (e2, t2) = lipschitz_bai(&game, &cfg, &mut rng::stream(9)).unwrap();
    traces_identical &= e1 == e2 && t1 == t2;

    Verdict::new(
        identical && traces_identical,
        format!("{logs} episode logs replay byte-identical = {identical}; bandit traces identical = {traces_identical}"),
    )
}
