use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use besovlab::besov::{
    verify_bernstein, verify_embedding, verify_product_composition, CompositionLaw, EmbeddingCase, ProductCase,
    VerifierSetup,
};
use besovlab::decay::{
    energy_inequality_audit, geometric_times, proposition_4_1_audit, run_experiment, DataKind, DecayExperiment,
    DecayReport, InitialDataSpec, TrackedNorm,
};
use besovlab::linalg::eigenvalues;
use besovlab::littlewood_paley::{block_range, BlockTables, DyadicCutoffs};
use besovlab::solver::{
    duhamel_residual, evolve_nonlinear, lemma_seed_sweep, LemmaId, LemmaParams, SnapshotSchedule,
};
use besovlab::systems::{
    builtin, check_structure, decoupled_counterexample, default_xi_grid, log_grid, make_damped_euler, ConditionK,
    PressureLaw, BUILTIN_MODELS,
};
use besovlab::{sampling, Exponent, GridSpec};
use num_complex::Complex64;

type Outcome = Result<(bool, String), String>;

fn check(ok: bool, what: String, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what);
    }
}

fn summarize(failures: Vec<String>, detail: String) -> Outcome {
    if failures.is_empty() {
        Ok((true, detail))
    } else {
        Ok((false, format!("{detail}; failed: {}", failures.join("; "))))
    }
}

fn partition_of_unity() -> Outcome {
    let grid = GridSpec::new(4096, 200.0 * PI, 1).map_err(|e| e.to_string())?;
    let cut = DyadicCutoffs::default();
    let range = block_range(&grid, &cut);
    let mut inhom: f64 = 0.0;
    let mut hom: f64 = 0.0;
    for i in 0..grid.num_points() {
        let xi = grid.xi(i);
        let mut s = cut.chi(xi);
        for j in 0..=range.j_max + 2 {
            s += cut.phi(xi * 2f64.powi(-j));
        }
        inhom = inhom.max((s - 1.0).abs());
        if xi != 0.0 {
            let h: f64 = range.iter().map(|j| cut.phi(xi * 2f64.powi(-j))).sum();
            hom = hom.max((h - 1.0).abs());
        }
    }
    let mut f = Vec::new();
    check(inhom <= 1e-12, format!("inhomogeneous defect {inhom:.2e}"), &mut f);
    check(hom <= 1e-12, format!("homogeneous defect {hom:.2e}"), &mut f);
    summarize(f, format!("max defects {inhom:.2e} / {hom:.2e}"))
}

fn structure_certification() -> Outcome {
    let grid = default_xi_grid();
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for name in BUILTIN_MODELS {
        let r = check_structure(&builtin(name).map_err(|e| e.to_string())?, &grid);
        check(r.pass && r.dissipation_constant > 0.0, format!("{name} c={}", r.dissipation_constant), &mut f);
        parts.push(format!("{name} c={:.4}", r.dissipation_constant));
    }
    let cx = check_structure(&decoupled_counterexample(), &grid);
    match &cx.condition_k {
        ConditionK::Fail { witness, .. } if !witness.is_empty() && !cx.pass => parts.push("counterexample fails K".into()),
        other => f.push(format!("counterexample K = {other:?}")),
    }
    summarize(f, parts.join(", "))
}

fn symbol_oracle() -> Outcome {
    let euler = make_damped_euler(1.0, PressureLaw::Isothermal { kappa: 1.0 }).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for xi in log_grid(1e-3, 1e3, 100) {
        let ev = eigenvalues(&euler.symbol(xi)).map_err(|e| e.to_string())?;
        let d = Complex64::new(1.0 - 4.0 * xi * xi, 0.0).sqrt();
        let roots = [(-1.0 + d) / 2.0, (-1.0 - d) / 2.0];
        for l in ev {
            let e = roots.iter().map(|r| (l - r).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(e / l.norm().max(1.0));
        }
    }
    let timo = builtin("timoshenko").map_err(|e| e.to_string())?;
    let ev = eigenvalues(&timo.symbol(0.0)).map_err(|e| e.to_string())?;
    let expected = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-0.5, 3f64.sqrt() / 2.0),
        Complex64::new(-0.5, -3f64.sqrt() / 2.0),
    ];
    let mut used = [false; 4];
    let mut timo_err: f64 = 0.0;
    for l in ev {
        let (k, e) = expected
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, r)| (k, (l - r).norm()))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        used[k] = true;
        timo_err = timo_err.max(e);
    }
    let mut f = Vec::new();
    check(worst <= 1e-10, format!("euler error {worst:.2e}"), &mut f);
    check(timo_err <= 1e-10, format!("timoshenko error {timo_err:.2e}"), &mut f);
    summarize(f, format!("euler {worst:.2e}, timoshenko {timo_err:.2e}"))
}

fn tail_experiment(model: &str, n: usize, s: f64, linear: bool, amplitude: f64) -> Result<DecayExperiment, String> {
    let system = builtin(model).map_err(|e| e.to_string())?;
    Ok(DecayExperiment {
        grid: GridSpec::new(n, 2000.0 * PI, system.dim_state()).map_err(|e| e.to_string())?,
        system,
        data: InitialDataSpec::new(DataKind::BesovTail { s }, amplitude, 1),
        sample_times: geometric_times(1.0, 5000.0, 40).map_err(|e| e.to_string())?,
        tracked_norms: vec![TrackedNorm::l2(0.0), TrackedNorm::l2(0.5)],
        fit_window: (100.0, 5000.0),
        linear_only: linear,
        dt: 1.0,
        tolerance: 0.05,
    })
}

fn slopes(r: &DecayReport) -> Vec<f64> {
    r.series.iter().map(|s| s.fit.map_or(f64::NAN, |f| f.slope)).collect()
}

fn linear_rates() -> Outcome {
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for model in BUILTIN_MODELS {
        let t = Instant::now();
        let r = run_experiment(&tail_experiment(model, 1 << 15, 0.5, true, 1.0)?).map_err(|e| e.to_string())?;
        let s = slopes(&r);
        let secs = t.elapsed().as_secs_f64();
        check(r.pass, format!("{model} slopes {s:.3?}"), &mut f);
        check(secs < 120.0, format!("{model} took {secs:.0} s"), &mut f);
        parts.push(format!("{model} {:.3}/{:.3} ({secs:.1} s)", s[0], s[1]));
    }
    summarize(f, parts.join(", "))
}

fn s_sweep() -> Outcome {
    let mut f = Vec::new();
    let mut fitted = Vec::new();
    for s in [0.3, 0.4, 0.5] {
        let mut exp = tail_experiment("damped-euler", 1 << 15, s, true, 1.0)?;
        exp.tracked_norms = vec![TrackedNorm::l2(0.0)];
        let r = run_experiment(&exp).map_err(|e| e.to_string())?;
        let slope = slopes(&r)[0];
        check(r.pass, format!("s={s} slope {slope:.3}"), &mut f);
        fitted.push(slope);
    }
    check(fitted.windows(2).all(|w| w[1] < w[0]), "not monotone in s".into(), &mut f);
    summarize(f, format!("slopes {fitted:.3?} for s = 0.3, 0.4, 0.5"))
}

fn high_frequency() -> Outcome {
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for model in BUILTIN_MODELS {
        let system = builtin(model).map_err(|e| e.to_string())?;
        let grid = GridSpec::new(4096, 200.0 * PI, system.dim_state()).map_err(|e| e.to_string())?;
        let mut data = InitialDataSpec::new(DataKind::HighFreqOnly, 1.0, 1);
        data.spectral_cutoff = 4.0;
        let z0 = besovlab::synthesize_initial_data(&system, &grid, &data).map_err(|e| e.to_string())?;
        let low = BlockTables::new(grid, DyadicCutoffs::default())
            .block(&z0, -1, false)
            .map_err(|e| e.to_string())?
            .l2_norm();
        let exp = DecayExperiment {
            system,
            grid,
            data,
            sample_times: (0..=40).map(|k| k as f64 * 0.5).collect(),
            tracked_norms: vec![TrackedNorm::l2(0.0)],
            fit_window: (0.0, 20.0),
            linear_only: true,
            dt: 0.5,
            tolerance: 0.05,
        };
        let r = run_experiment(&exp).map_err(|e| e.to_string())?;
        let fit = r.series[0].fit.ok_or("no fit")?;
        check(low == 0.0, format!("{model} low block {low:.2e}"), &mut f);
        check(
            fit.exponential_r_squared >= 0.99 && !fit.algebraic,
            format!("{model} R2 {:.4} algebraic={}", fit.exponential_r_squared, fit.algebraic),
            &mut f,
        );
        parts.push(format!(
            "{model} R2 {:.4} rate {:.3}",
            fit.exponential_r_squared, fit.exponential_rate
        ));
    }
    summarize(f, parts.join(", "))
}

fn nonlinear_rates() -> Outcome {
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for model in BUILTIN_MODELS {
        let lin = run_experiment(&tail_experiment(model, 1 << 13, 0.5, true, 1e-3)?).map_err(|e| e.to_string())?;
        let nl = run_experiment(&tail_experiment(model, 1 << 13, 0.5, false, 1e-3)?).map_err(|e| e.to_string())?;
        let (a, b) = (slopes(&lin), slopes(&nl));
        let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        check(nl.abort.is_none() && dev <= 0.05, format!("{model} deviation {dev:.3}"), &mut f);
        parts.push(format!("{model} {:.3}/{:.3} (dev {dev:.1e})", b[0], b[1]));
    }
    let mut base = tail_experiment("damped-euler", 1 << 13, 0.5, false, 1e-2)?;
    base.sample_times = geometric_times(1.0, 2000.0, 30).map_err(|e| e.to_string())?;
    let audit = proposition_4_1_audit(&base, &[1e-2, 1e-3, 1e-4]).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = audit.runs.iter().map(|r| r.ratio).collect();
    check(audit.pass, format!("audit ratios {ratios:.4?}"), &mut f);
    parts.push(format!("audit spread {:.4}", audit.spread));
    summarize(f, parts.join(", "))
}

fn lemma_bounds() -> Outcome {
    let spec = builtin("damped-euler").map_err(|e| e.to_string())?;
    let grid = GridSpec::new(4096, 400.0 * PI, 2).map_err(|e| e.to_string())?;
    let cut = DyadicCutoffs::default();
    let mut times = vec![0.0];
    times.extend(geometric_times(0.5, 1000.0, 30).map_err(|e| e.to_string())?.into_iter().skip(1));
    let seeds: Vec<u64> = (0..10).collect();
    let s = 0.5;
    let tuples = [(0.0, 0.0), (0.5 + s, 0.0), (0.5 + s, 0.5)];
    let mut f = Vec::new();
    let mut worst_spread: f64 = 0.0;
    let mut worst_cmp: f64 = 0.0;
    for lemma in [LemmaId::DivergenceLowBlock, LemmaId::DivergenceBlocks, LemmaId::SourceBlocks] {
        for (sigma, ell) in tuples {
            let p = LemmaParams { sigma, ell, s, r: Exponent::Finite(2.0) };
            let r = lemma_seed_sweep(&spec, &grid, lemma, p, &seeds, &times, &cut).map_err(|e| e.to_string())?;
            worst_spread = worst_spread.max(r.spread);
            if let Some(c) = r.comparison_ratio_max {
                worst_cmp = worst_cmp.max(c);
            }
            check(r.pass, format!("{lemma:?} ({sigma},{ell},{s}) spread {:.3}", r.spread), &mut f);
        }
    }
    summarize(f, format!("worst seed spread {worst_spread:.3}, envelope comparison {worst_cmp:.3}"))
}

fn duhamel_consistency() -> Outcome {
    let spec = builtin("damped-euler").map_err(|e| e.to_string())?;
    let grid = GridSpec::new(256, 40.0 * PI, 2).map_err(|e| e.to_string())?;
    let z0 = sampling::gaussian(&grid, 20.0 * PI, 3.0, &[0.2, 0.1]);
    let cut = DyadicCutoffs::default();
    let mut res = Vec::new();
    for dt in [0.1, 0.05, 0.025, 0.0125] {
        let traj = evolve_nonlinear(&spec, &z0, 4.0, dt, &SnapshotSchedule::Every(1)).map_err(|e| e.to_string())?;
        res.push(duhamel_residual(&spec, &traj, 4.0, &cut).map_err(|e| e.to_string())?);
    }
    let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let mut f = Vec::new();
    check(orders.iter().all(|o| *o >= 1.8), format!("orders {orders:.3?}"), &mut f);
    let res: Vec<String> = res.iter().map(|r| format!("{r:.2e}")).collect();
    summarize(f, format!("residuals [{}], orders {orders:.3?}", res.join(", ")))
}

fn inequality_suites() -> Outcome {
    let setup = VerifierSetup::default();
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let r = verify_bernstein(alpha, 100, &setup).map_err(|e| e.to_string())?;
        check(r.pass, format!("bernstein alpha={alpha} ratios [{:.3}, {:.3}]", r.ratio_min, r.ratio_max), &mut f);
        parts.push(format!("bernstein {alpha}: [{:.3}, {:.3}]", r.ratio_min, r.ratio_max));
    }
    let l1 = verify_embedding(EmbeddingCase::L1ToNegativeBesov, 100, &setup).map_err(|e| e.to_string())?;
    let ds = l1.diagnostics["dilation_spread"];
    check(l1.pass && ds <= 0.1, format!("dilation spread {ds:.3}"), &mut f);
    parts.push(format!("dilation spread {ds:.3}"));
    let q = verify_product_composition(
        ProductCase::QuadraticComposition { s: 0.5, r: 1.0, law: CompositionLaw::Square, amplitude: 0.5 },
        40,
        &setup,
    )
    .map_err(|e| e.to_string())?;
    let ex = q.diagnostics["amplitude_exponent"];
    check(q.pass && (ex - 2.0).abs() <= 0.1, format!("amplitude exponent {ex:.3}"), &mut f);
    parts.push(format!("amplitude exponent {ex:.3}"));
    summarize(f, parts.join(", "))
}

fn energy_inequality() -> Outcome {
    let spec = builtin("thermoelasticity").map_err(|e| e.to_string())?;
    let grid = GridSpec::new(1024, 100.0 * PI, 4).map_err(|e| e.to_string())?;
    let data = InitialDataSpec::new(DataKind::GaussianL1, 1e-2, 0);
    let seeds: Vec<u64> = (0..10).collect();
    let a = energy_inequality_audit(&spec, &grid, &data, &seeds, &[1e-2, 5e-3], 50.0, 0.25).map_err(|e| e.to_string())?;
    let c0: Vec<f64> = a.runs.iter().map(|r| r.c0).collect();
    let lo = c0.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = c0.iter().cloned().fold(0.0, f64::max);
    let mut f = Vec::new();
    check(a.pass, format!("C0 spread {:.3}", a.c0_spread), &mut f);
    summarize(f, format!("C0 in [{lo:.3}, {hi:.3}], spread {:.3}", a.c0_spread))
}

fn determinism() -> Outcome {
    let json = || -> Result<Vec<String>, String> {
        let mut out = Vec::new();
        let exp = tail_experiment("thermoelasticity", 1 << 10, 0.5, false, 1e-3)?;
        let exp = DecayExperiment {
            grid: GridSpec::new(1024, 200.0 * PI, 4).map_err(|e| e.to_string())?,
            sample_times: geometric_times(1.0, 100.0, 12).map_err(|e| e.to_string())?,
            fit_window: (1.0, 100.0),
            ..exp
        };
        out.push(run_experiment(&exp).map_err(|e| e.to_string())?.to_json().map_err(|e| e.to_string())?);
        let st = check_structure(&builtin("timoshenko").map_err(|e| e.to_string())?, &default_xi_grid());
        out.push(serde_json::to_string(&st).map_err(|e| e.to_string())?);
        let setup = VerifierSetup::default();
        let b = verify_bernstein(1.0, 20, &setup).map_err(|e| e.to_string())?;
        out.push(serde_json::to_string(&b).map_err(|e| e.to_string())?);
        let spec = builtin("damped-euler").map_err(|e| e.to_string())?;
        let grid = GridSpec::new(1024, 200.0 * PI, 2).map_err(|e| e.to_string())?;
        let p = LemmaParams { sigma: 0.0, ell: 0.0, s: 0.5, r: Exponent::Finite(2.0) };
        let l = lemma_seed_sweep(&spec, &grid, LemmaId::SourceBlocks, p, &[1, 2, 3], &[0.0, 1.0, 10.0], &DyadicCutoffs::default())
            .map_err(|e| e.to_string())?;
        out.push(serde_json::to_string(&l).map_err(|e| e.to_string())?);
        Ok(out)
    };
    let a = json()?;
    let b = json()?;
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    let mut f = Vec::new();
    check(same == a.len(), format!("{} of {} reports differ", a.len() - same, a.len()), &mut f);
    summarize(f, format!("{same}/{} reports byte-identical", a.len()))
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "partition of unity", 1.0, partition_of_unity),
        (2, "structure certification", 5.0, structure_certification),
        (3, "symbol oracle", f64::INFINITY, symbol_oracle),
        (4, "linear decay rates", f64::INFINITY, linear_rates),
        (5, "s-sweep", f64::INFINITY, s_sweep),
        (6, "high-frequency regime", f64::INFINITY, high_frequency),
        (7, "nonlinear decay", f64::INFINITY, nonlinear_rates),
        (8, "lemma bounds", f64::INFINITY, lemma_bounds),
        (9, "duhamel consistency", f64::INFINITY, duhamel_consistency),
        (10, "inequality suites", f64::INFINITY, inequality_suites),
        (11, "energy inequality", f64::INFINITY, energy_inequality),
        (12, "determinism", f64::INFINITY, determinism),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((_, d)) if secs > budget => (false, format!("{d}; over time budget {budget} s")),
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {id:>2} {:<4} {name}: {detail} [{secs:.2} s]", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
