//! Scratch calibration runs for the acceptance fixtures (not part of the
//! deliverable API; run with `cargo run --release --example cal -- <args>`).

use sparsedp::accountant::{selection_step_epsilon, sigma_for_noise_budget, step_delta_for_total};
use sparsedp::erm::{GlmObjective, Link};
use sparsedp::trainer::{
    train, ClipSpec, GradientOracle, SelectionStrategy, TrainConfig, TrainMode,
};
use sparsedp::{NoiseSource, PrivacyBudget, SparseVector};

/// Sparse logistic task with a small hot coordinate set carrying most of the
/// feature mass, scattered across [0, p) by a seed-dependent permutation.
fn synth_task(seed: u64, n: usize, p: usize, support: usize, hot: usize) -> GlmObjective<f64> {
    let mut rng = NoiseSource::new(seed);
    let mut perm: Vec<usize> = (0..p).collect();
    rng.shuffle(&mut perm);
    let mut w_star = vec![0.0f64; p];
    for h in 0..hot {
        w_star[perm[h]] = if h % 2 == 0 { 2.5 } else { -2.5 };
    }
    let val = 1.0 / (support as f64).sqrt();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut idx = Vec::with_capacity(support);
        while idx.len() < support {
            let k = if rng.bernoulli(0.95) {
                perm[rng.index(hot)]
            } else {
                perm[hot + rng.index(p - hot)]
            };
            if !idx.contains(&k) {
                idx.push(k);
            }
        }
        idx.sort_unstable();
        let pairs: Vec<(usize, f64)> =
            idx.iter().map(|&k| (k, if rng.bernoulli(0.5) { val } else { -val })).collect();
        let x = SparseVector::from_pairs(p, pairs).unwrap();
        let z: f64 = x.iter().map(|(k, v)| v * w_star[k]).sum();
        let y = if rng.bernoulli(1.0 / (1.0 + (-3.0 * z).exp())) { 1.0 } else { 0.0 };
        samples.push((x, y));
    }
    GlmObjective::new(p, Link::Logistic, samples).unwrap()
}

#[derive(Clone, Copy, Debug)]
struct Cal6 {
    b: usize,
    epochs: usize,
    gamma: f64,
    s1: f64,
    s2: f64,
    s0: f64,
    eps_total: f64,
    eps_sel_share: f64,
    sv_alpha: f64,
    hot: usize,
}

fn run_mode(
    obj: &GlmObjective<f64>,
    mode: TrainMode,
    c: &Cal6,
    eta: f64,
    sigma: f64,
    eps_step: f64,
    delta_step: f64,
    k: usize,
    seed: u64,
) -> f64 {
    let selection = match mode {
        TrainMode::DpSgd => SelectionStrategy::Uniform,
        TrainMode::SparseExp => SelectionStrategy::Exponential {
            budget: PrivacyBudget::new(eps_step, delta_step).unwrap(),
        },
        TrainMode::SparseSv => SelectionStrategy::SparseVector {
            budget: PrivacyBudget::new(eps_step, delta_step).unwrap(),
            alpha: c.sv_alpha,
            c1: k,
        },
        TrainMode::SparseUniform => SelectionStrategy::Uniform,
        _ => unreachable!(),
    };
    let cfg = TrainConfig {
        batch_size: c.b,
        learning_rate: eta,
        epochs: c.epochs,
        noise_multiplier: sigma,
        sparsity: c.gamma,
        clip: ClipSpec::new(c.s0, c.s1, c.s2).unwrap(),
        selection,
        step_delta: delta_step,
        seed,
        adam: false,
    };
    let (params, _) = train(obj, None, vec![0.0f64; 1000], &cfg, mode).unwrap();
    obj.mean_loss(&params)
}

fn run_cal6(c: Cal6, seeds: &[u64], etas: &[f64]) {
    let (n, p, support) = (5000usize, 1000usize, 10usize);
    let delta_total = 1e-5;
    let steps = (c.epochs * (n / c.b)) as u64;
    let delta_step = step_delta_for_total(delta_total, c.b as u64, n as u64, steps).unwrap();
    let eps_sel_total = c.eps_total * c.eps_sel_share;
    let sigma_sparse = sigma_for_noise_budget(
        c.eps_total - eps_sel_total,
        delta_step,
        c.b as u64,
        n as u64,
        steps,
    )
    .unwrap();
    let sigma_dp =
        sigma_for_noise_budget(c.eps_total, delta_step, c.b as u64, n as u64, steps).unwrap();
    let eps_step =
        selection_step_epsilon(eps_sel_total, delta_step, c.b as u64, n as u64, steps).unwrap();
    let k = (c.gamma * p as f64) as usize;
    let eps_draw = eps_step / (2.0 * k as f64 * (1.0 / delta_step).ln()).sqrt();
    println!(
        "cfg {c:?}\n  steps={steps} sigma_dp={sigma_dp:.3} sigma_sp={sigma_sparse:.3} eps'={eps_step:.3} eps''={eps_draw:.4}"
    );

    let modes = [TrainMode::DpSgd, TrainMode::SparseExp, TrainMode::SparseSv, TrainMode::SparseUniform];
    let per_seed = std::env::var("CAL_PER_SEED").is_ok();
    for mode in modes {
        let sigma = if mode == TrainMode::DpSgd { sigma_dp } else { sigma_sparse };
        print!("  {:>14}:", mode.as_str());
        for &eta in etas {
            let mut total = 0.0;
            let mut each = Vec::new();
            for &seed in seeds {
                let obj = synth_task(1000 + seed, n, p, support, c.hot);
                let loss = run_mode(&obj, mode, &c, eta, sigma, eps_step, delta_step, k, seed);
                total += loss;
                each.push(loss);
            }
            print!("  eta={eta}: {:.4}", total / seeds.len() as f64);
            if per_seed {
                print!(" {each:.4?}");
            }
        }
        println!();
    }
    let obj = synth_task(1001, n, p, support, c.hot);
    println!("  init loss ~ {:.4}", obj.mean_loss(&vec![0.0f64; p]));
}

mod cal7 {
    use sparsedp::accountant::{selection_step_epsilon, step_delta_for_total};
    use sparsedp::embedding::{attach_negatives, context_pairs, CbowObjective, EmbeddingTable};
    use sparsedp::memorization::{
        evaluate, generate_canaries, generate_control_phrases, insert_canaries,
    };
    use sparsedp::trainer::{train, ClipSpec, SelectionStrategy, TrainConfig, TrainMode};
    use sparsedp::{NoiseSource, PrivacyBudget};

    const V: usize = 200;
    const DIM: usize = 16;

    fn synth_stream(seed: u64, len: usize) -> Vec<u32> {
        let mut rng = NoiseSource::new(seed);
        (0..len)
            .map(|_| {
                let u = rng.uniform();
                ((V as f64 * u * u) as usize % V) as u32
            })
            .collect()
    }

    pub fn run(n_c_np: usize, n_c_dp: usize, epochs_np: usize, epochs_dp: usize, eta: f64, sigma: f64) {
        let seed = 4242u64;
        let stream = synth_stream(seed, 5200);
        let canaries = generate_canaries(V, 200, &mut NoiseSource::substream(seed, 40)).unwrap();
        let controls =
            generate_control_phrases(V, 200, &canaries, &mut NoiseSource::substream(seed, 41))
                .unwrap();

        for (label, mode, n_c, epochs) in [
            ("non_private", TrainMode::NonPrivate, n_c_np, epochs_np),
            ("dp_sgd", TrainMode::DpSgd, n_c_dp, epochs_dp),
            ("sparse_exp", TrainMode::SparseExp, n_c_dp, epochs_dp),
        ] {
            let mut augmented = stream.clone();
            insert_canaries(&mut augmented, &canaries, n_c, &mut NoiseSource::substream(seed, 42))
                .unwrap();
            let pairs = context_pairs(&augmented, 2);
            let samples =
                attach_negatives(&pairs, V, 4, &mut NoiseSource::substream(seed, 43)).unwrap();
            let n = samples.len();
            let obj: CbowObjective<f64> = CbowObjective::new(V, DIM, samples).unwrap();
            let b = 20usize;
            let steps = (epochs * (n / b)) as u64;
            let (step_delta, eps_sel) = if mode == TrainMode::NonPrivate {
                (0.5, 0.0)
            } else {
                let d = step_delta_for_total(1e-5, b as u64, n as u64, steps).unwrap();
                let e = if mode == TrainMode::SparseExp {
                    selection_step_epsilon(4.0, d, b as u64, n as u64, steps).unwrap()
                } else {
                    0.0
                };
                (d, e)
            };
            let selection = if mode == TrainMode::SparseExp {
                SelectionStrategy::Exponential {
                    budget: PrivacyBudget::new(eps_sel, step_delta).unwrap(),
                }
            } else {
                SelectionStrategy::Uniform
            };
            let cfg = TrainConfig {
                batch_size: b,
                learning_rate: eta,
                epochs,
                noise_multiplier: if mode == TrainMode::NonPrivate { 0.0 } else { sigma },
                sparsity: 0.01,
                clip: ClipSpec::new(0.05, 1.0, 0.05).unwrap(),
                selection,
                step_delta,
                seed,
                adam: false,
            };
            let table =
                EmbeddingTable::<f64>::init_uniform(V, DIM, &mut NoiseSource::substream(seed, 44));
            let t0 = std::time::Instant::now();
            let (params, report) = train(&obj, None, table.into_flat(), &cfg, mode).unwrap();
            let table = EmbeddingTable::from_flat(V, DIM, params).unwrap();
            let canary_rep = evaluate(&table, &canaries, n_c, 2000, 10, seed ^ 77).unwrap();
            let control_rep = evaluate(&table, &controls, 0, 2000, 10, seed ^ 78).unwrap();
            println!(
                "{label:>12} n_c={n_c} epochs={epochs} pairs={n} loss={:.3} eps={:?} canary_p={:.4} (stat {:.1}) control_p={:.4} [{:.1?}s]",
                report.epochs.last().unwrap().train_loss,
                report.total_budget.map(|bd| bd.epsilon),
                canary_rep.summary.p_value,
                canary_rep.summary.statistic,
                control_rep.summary.p_value,
                t0.elapsed().as_secs_f32(),
            );
            println!("      canary hist {:?}", canary_rep.summary.histogram);
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("7") {
        let v: Vec<f64> = args[1..].iter().map(|a| a.parse().unwrap()).collect();
        cal7::run(v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize, v[4], v[5]);
        return;
    }
    let seeds: Vec<u64> = (0..5).collect();
    let mut c = Cal6 {
        b: 10,
        epochs: 4,
        gamma: 0.025,
        s1: 0.5,
        s2: 0.05,
        s0: 0.02,
        eps_total: 4.0,
        eps_sel_share: 0.5,
        sv_alpha: 0.05,
        hot: 15,
    };
    let mut etas = vec![0.25, 0.5, 1.0, 2.0];
    for a in &args {
        if a == "6" {
            continue;
        }
        let (key, v) = a.split_once('=').unwrap();
        if key == "etas" {
            etas = v.split(',').map(|s| s.parse().unwrap()).collect();
            continue;
        }
        let f: f64 = v.parse().unwrap();
        match key {
            "b" => c.b = f as usize,
            "epochs" => c.epochs = f as usize,
            "gamma" => c.gamma = f,
            "s1" => c.s1 = f,
            "s2" => c.s2 = f,
            "s0" => c.s0 = f,
            "eps" => c.eps_total = f,
            "share" => c.eps_sel_share = f,
            "sv_alpha" => c.sv_alpha = f,
            "hot" => c.hot = f as usize,
            _ => panic!("unknown {key}"),
        }
    }
    run_cal6(c, &seeds, &etas);
}

