//! Experiment runner: reads a validated config, echoes it with all defaults
//! materialized, executes the requested command, and writes CSV tables plus a
//! summary.json with pass/fail verdicts.

use crate::config::{vec_to_dvector, Command, ExperimentConfig, SCHEMA};
use crate::report::{fmt_float, write_csv, Check, Summary};
use crate::{
    critical_points, dynamics, gibbs, inequalities, measures, metastability,
    potentials::PotentialSpec, Error, Result,
};
use nalgebra::DVector;
use std::path::Path;

fn command_name(c: Command) -> &'static str {
    match c {
        Command::PotentialReport => "potential-report",
        Command::CriticalPoints => "critical-points",
        Command::Gibbs => "gibbs",
        Command::Simulate => "simulate",
        Command::Pde => "pde",
        Command::Transition => "transition",
        Command::SaddleExit => "saddle-exit",
        Command::Inequalities => "inequalities",
        Command::CurieWeiss => "curie-weiss",
    }
}

/// Execute the experiment into `out_dir`.  Returns whether every enabled
/// acceptance rule passed.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<bool> {
    cfg.validate()?;
    let cfg = cfg.materialized();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let echo = serde_json::to_string_pretty(&cfg).expect("config serializes");
    std::fs::write(out_dir.join("config.echo.json"), echo + "\n")
        .map_err(|e| Error::Config(format!("cannot write config echo: {e}")))?;

    let spec = cfg.potential.to_spec()?;
    let mut summary = Summary::new();
    let mut body = || -> Result<()> {
        match cfg.command {
            Command::PotentialReport => potential_report(&cfg, &spec, out_dir, &mut summary),
            Command::CriticalPoints => critical_points_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::Gibbs => gibbs_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::Simulate => simulate_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::Pde => pde_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::Transition => transition_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::SaddleExit => saddle_exit_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::Inequalities => inequalities_cmd(&cfg, &spec, out_dir, &mut summary),
            Command::CurieWeiss => curie_weiss_cmd(&cfg, out_dir, &mut summary),
        }
    };
    match cfg.workers {
        Some(w) if w > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            pool.install(body)?;
        }
        _ => body()?,
    }

    summary.write(
        &out_dir.join("summary.json"),
        SCHEMA,
        command_name(cfg.command),
        cfg.seed,
    )
}

fn potential_report(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.potential_report.clone().unwrap_or_default();
    if p.points < 2 || !(p.grid_half > 0.0) {
        return Err(Error::input("runner", "potential_report", "need points >= 2 and grid-half > 0"));
    }
    let mut rows = Vec::new();
    for axis in 0..spec.d {
        for i in 0..p.points {
            let t = -p.grid_half + 2.0 * p.grid_half * i as f64 / (p.points - 1) as f64;
            let mut m = DVector::zeros(spec.d);
            m[axis] = t;
            let e = spec.evaluate(&m)?;
            rows.push(vec![
                axis.to_string(),
                fmt_float(t),
                fmt_float(spec.v(&m)),
                fmt_float(e.value),
                fmt_float(e.gradient.norm()),
            ]);
        }
    }
    write_csv(
        &out.join("potential.csv"),
        &["axis", "t", "v", "v-kappa", "grad-v-kappa-norm"],
        &rows,
    )?;
    summary.set("kind", &cfg.potential.kind);
    summary.set("kappa", spec.kappa);
    summary.set("d", spec.d);
    let coercive = spec.coercivity_probe();
    summary.set("coercive", coercive);
    summary.check(Check::is_true("confined-potential-is-coercive", coercive));
    Ok(())
}

fn critical_points_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.critical_points.clone().unwrap_or_default();
    let search = critical_points::find_critical_points(spec, p.box_half, p.grid_per_axis)?;
    let mut header: Vec<String> =
        vec!["value".into(), "morse-index".into(), "degenerate".into(), "lambda-min".into()];
    for k in 0..spec.d {
        header.push(format!("x{}", k + 1));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for cp in &search.points {
        let mut row = vec![
            fmt_float(cp.value),
            cp.index.to_string(),
            cp.degenerate.to_string(),
            fmt_float(cp.spectrum[0]),
        ];
        for k in 0..spec.d {
            row.push(fmt_float(cp.location[k]));
        }
        rows.push(row);
    }
    write_csv(&out.join("critical_points.csv"), &header_refs, &rows)?;
    summary.set("count", search.points.len());
    summary.set("failed-seeds", search.failed_seeds);
    summary.set(
        "minimizer-count",
        search.points.iter().filter(|c| c.is_minimizer()).count(),
    );
    summary.check(Check::is_true("found-critical-points", !search.points.is_empty()));
    summary.check(Check::is_true(
        "found-a-minimizer",
        search.points.iter().any(|c| c.is_minimizer()),
    ));
    Ok(())
}

fn gibbs_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.gibbs.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut all_positive = true;
    for &xi in &p.xi_grid {
        let t = gibbs::tilted_measure(spec, xi)?;
        all_positive &= t.variance > 0.0;
        rows.push(vec![
            fmt_float(xi),
            fmt_float(t.log_z),
            fmt_float(t.mean),
            fmt_float(t.variance),
        ]);
    }
    write_csv(
        &out.join("gibbs.csv"),
        &["xi", "log-z", "mean", "variance"],
        &rows,
    )?;
    summary.check(Check::is_true("tilted-variance-positive", all_positive));

    if let (Some(sigma2), Some(kappa0)) = (cfg.potential.sigma2, cfg.potential.kappa0) {
        let fp = critical_points::curie_weiss_fixed_points(sigma2, kappa0)?;
        summary.set("fixed-points", &fp.fixed_points);
        summary.set("derivative-at-zero", fp.derivative_at_zero);
        let mut erows = Vec::new();
        for &n in &p.n_list {
            let h = gibbs::stationary_entropy_curie_weiss(n, sigma2, kappa0)?;
            let var = gibbs::gibbs_barycenter_variance(n, sigma2, kappa0)?;
            erows.push(vec![fmt_float(n), fmt_float(h), fmt_float(var)]);
        }
        write_csv(
            &out.join("stationary_entropy.csv"),
            &["n", "relative-entropy", "barycenter-variance"],
            &erows,
        )?;
    }
    Ok(())
}

fn simulate_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.simulate.clone().unwrap_or_default();
    let model = match p.model.as_str() {
        "toy" => dynamics::Model::Toy,
        "curie-weiss" => dynamics::Model::CurieWeiss,
        other => {
            return Err(Error::Config(format!(
                "unknown simulate model '{other}' (expected toy or curie-weiss)"
            )))
        }
    };
    let mean = if p.init_mean.is_empty() {
        DVector::zeros(spec.d)
    } else if p.init_mean.len() == spec.d {
        vec_to_dvector(&p.init_mean)
    } else {
        return Err(Error::Config(format!(
            "simulate.init-mean must have dimension {}",
            spec.d
        )));
    };

    let mut header: Vec<String> = vec!["replica".into(), "time".into()];
    for k in 0..spec.d {
        header.push(format!("barycenter{}", k + 1));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    let mut last_mean = DVector::zeros(spec.d);
    let mut last_var = DVector::zeros(spec.d);
    for replica in 0..p.replicas as u64 {
        let sim_cfg = dynamics::SimConfig {
            spec: spec.clone(),
            model: model.clone(),
            n: p.n,
            dt: p.dt,
            horizon: p.horizon,
            seed: cfg.seed,
            replica_id: replica,
            init: dynamics::Init::Gaussian { mean: mean.clone(), s2: p.init_s2 },
            noise: true,
            thin_every: None,
        };
        let batch = if p.reduced {
            dynamics::simulate_barycenter(sim_cfg)?
        } else {
            dynamics::simulate_particles(sim_cfg)?
        };
        for (fi, t) in batch.times.iter().enumerate() {
            let state = &batch.states[fi];
            let particles = state.len() / spec.d;
            let mut row = vec![replica.to_string(), fmt_float(*t)];
            for k in 0..spec.d {
                let mut acc = 0.0;
                for j in 0..particles {
                    acc += state[j * spec.d + k];
                }
                row.push(fmt_float(acc / particles as f64));
            }
            rows.push(row);
        }
        last_mean = batch.terminal_mean;
        last_var = batch.terminal_variance;
    }
    write_csv(&out.join("trajectory.csv"), &header_refs, &rows)?;
    summary.set("terminal-mean", last_mean.iter().copied().collect::<Vec<f64>>());
    summary.set("terminal-variance", last_var.iter().copied().collect::<Vec<f64>>());
    summary.check(Check::is_true(
        "trajectory-finite",
        last_mean.iter().all(|x| x.is_finite()) && last_var.iter().all(|x| x.is_finite()),
    ));
    Ok(())
}

fn pde_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.pde.clone().unwrap_or_default();
    let g = measures::GaussianSpec::new(DVector::from_element(1, p.init_mean), p.init_s2)?;
    let rho0 = measures::gaussian_density_1d(&g, 2048)?;
    let opts = dynamics::PdeOptions { n_cells: p.n_cells, store_every: p.store_every };
    let sol = dynamics::solve_mckean_vlasov_1d(spec, &rho0, p.dt, p.horizon, &opts)?;
    let mut rows = Vec::new();
    for f in &sol.frames {
        rows.push(vec![
            fmt_float(f.t),
            fmt_float(f.mean),
            fmt_float(f.variance),
            fmt_float(f.free_energy),
        ]);
    }
    write_csv(
        &out.join("pde.csv"),
        &["t", "mean", "variance", "free-energy"],
        &rows,
    )?;
    let last = sol.frames.last().expect("solver stores at least one frame");
    let final_rows: Vec<Vec<String>> = last
        .density
        .grid
        .iter()
        .zip(&last.density.values)
        .map(|(x, v)| vec![fmt_float(*x), fmt_float(*v)])
        .collect();
    write_csv(&out.join("pde_final_density.csv"), &["x", "density"], &final_rows)?;
    summary.set("box-half", sol.box_half);
    summary.set("h", sol.h);
    summary.set("mass-drift", sol.mass_drift);
    summary.set("final-free-energy", last.free_energy);
    summary.check(Check::upper("mass-drift", sol.mass_drift, 1e-8));
    let monotone = sol
        .frames
        .windows(2)
        .all(|w| w[1].free_energy <= w[0].free_energy + 1e-9);
    summary.check(Check::is_true("free-energy-nonincreasing", monotone));
    Ok(())
}

fn transition_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg
        .transition
        .as_ref()
        .ok_or_else(|| Error::Config("transition block is required".into()))?;
    let x0 = vec_to_dvector(&p.x0);
    let x1 = vec_to_dvector(&p.x1);
    let z = vec_to_dvector(&p.z);
    let study = metastability::transition_study(
        spec, &x0, &x1, &z, p.delta, &p.n_list, p.replicas, p.dt, cfg.seed,
    )?;
    let mut rows = Vec::new();
    for (n, taus) in &study.samples {
        for (i, tau) in taus.iter().enumerate() {
            rows.push(vec![fmt_float(*n), i.to_string(), fmt_float(*tau)]);
        }
    }
    write_csv(&out.join("transition_samples.csv"), &["n", "sample", "tau"], &rows)?;

    let largest = study
        .samples
        .last()
        .ok_or_else(|| Error::numeric("runner", "transition", "all N excluded by censoring"))?;
    let ek = metastability::eyring_kramers_predict(spec, &x0, &z, largest.0)?;
    let prefactor_pred = ek.time / (largest.0 * ek.delta_v).exp();
    summary.set("slope", study.slope);
    summary.set("slope-ci", study.slope_ci);
    summary.set("prefactor", study.prefactor);
    summary.set("barrier-height", ek.delta_v);
    summary.set("prefactor-predicted", prefactor_pred);
    summary.set("excluded-n", study.excluded.iter().map(|e| e.0).collect::<Vec<f64>>());
    summary.check(Check::band(
        "arrhenius-slope",
        study.slope,
        0.9 * ek.delta_v,
        1.1 * ek.delta_v,
    ));
    summary.check(Check::band(
        "kramers-prefactor",
        study.prefactor,
        0.5 * prefactor_pred,
        2.0 * prefactor_pred,
    ));
    if largest.1.len() >= 200 {
        let t = metastability::exponentiality_test(&largest.1)?;
        summary.set("exponentiality-ks", t.statistic);
        summary.set("exponentiality-p", t.p_value);
        summary.check(Check::upper("exponentiality-ks", t.statistic, 0.08));
    }
    Ok(())
}

fn saddle_exit_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg
        .saddle_exit
        .as_ref()
        .ok_or_else(|| Error::Config("saddle-exit block is required".into()))?;
    let z = vec_to_dvector(&p.z);
    let study =
        metastability::saddle_exit_study(spec, &z, p.delta, &p.n_list, p.replicas, cfg.seed)?;
    let mut rows = Vec::new();
    for per in &study.per_n {
        for i in 0..per.exit_times.len() {
            rows.push(vec![
                fmt_float(per.n),
                per.sides[i].to_string(),
                fmt_float(per.exit_times[i]),
                fmt_float(per.centered[i]),
            ]);
        }
    }
    write_csv(
        &out.join("saddle_exit.csv"),
        &["n", "side", "exit-time", "centered"],
        &rows,
    )?;
    summary.set("lambda-bar1", study.lambda_bar1);
    summary.set("t-plus", study.heteroclinic.t_plus);
    summary.set("t-minus", study.heteroclinic.t_minus);
    summary.set("ascent-limit-converged", study.heteroclinic.converged);
    summary.check(Check::is_true("ascent-limit-converged", study.heteroclinic.converged));
    for per in &study.per_n {
        let se = 0.5 / (per.exit_times.len() as f64).sqrt();
        summary.check(Check::band(
            &format!("side-balance-n{}", per.n),
            per.plus_fraction,
            0.5 - 3.0 * se,
            0.5 + 3.0 * se,
        ));
        summary.check(Check::upper(&format!("centered-law-ks-n{}", per.n), per.ks, 0.1));
    }
    Ok(())
}

fn inequalities_cmd(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: &Path,
    summary: &mut Summary,
) -> Result<()> {
    let p = cfg.inequalities.clone().unwrap_or_default();
    if !(p.r_min > 0.0) || !(p.r_max > p.r_min) || p.r_per_decade == 0 {
        return Err(Error::Config("inequalities needs 0 < r-min < r-max and r-per-decade >= 1".into()));
    }
    let decades = (p.r_max / p.r_min).log10();
    let count = ((decades * p.r_per_decade as f64).round() as usize).max(2);
    let r_grid: Vec<f64> = (0..=count)
        .map(|i| p.r_min * (p.r_max / p.r_min).powf(i as f64 / count as f64))
        .collect();
    let profile = inequalities::lojasiewicz_profile(spec, p.box_half, p.grid_per_axis, &r_grid)?;
    let pl = inequalities::pl_constant(spec, p.box_half, p.grid_per_axis)?;
    let rows: Vec<Vec<String>> = (0..profile.r.len())
        .map(|i| {
            vec![
                fmt_float(profile.r[i]),
                fmt_float(profile.theta1[i]),
                fmt_float(profile.phi1[i]),
                fmt_float(profile.theta_tilde[i]),
            ]
        })
        .collect();
    write_csv(
        &out.join("inequality_profile.csv"),
        &["r", "theta1", "phi1", "theta-tilde"],
        &rows,
    )?;
    summary.set("theta-exponent", profile.theta_exponent);
    summary.set("phi-exponent", profile.phi_exponent);
    summary.set("theta-at-zero", profile.theta_at_zero);
    summary.set("tight", profile.tight);
    summary.set("pl-holds", profile.pl_holds);
    summary.set("pl-constant", pl.value);
    summary.set("pl-divergent", pl.divergent);
    let theta_monotone = profile.theta1.windows(2).all(|w| w[1] >= w[0]);
    let phi_monotone = profile.phi1.windows(2).all(|w| w[1] >= w[0]);
    summary.check(Check::is_true("theta1-nondecreasing", theta_monotone));
    summary.check(Check::is_true("phi1-nondecreasing", phi_monotone));
    let tilde_dominates = (0..profile.r.len()).all(|i| profile.theta_tilde[i] >= profile.theta1[i]);
    summary.check(Check::is_true("theta-tilde-dominates", tilde_dominates));
    Ok(())
}

fn curie_weiss_cmd(cfg: &ExperimentConfig, out: &Path, summary: &mut Summary) -> Result<()> {
    let p = cfg.curie_weiss.clone().unwrap_or_default();
    let suite = inequalities::curie_weiss_suite(p.kappa0, &p.n_list)?;
    let rows: Vec<Vec<String>> = suite
        .lsi_lower_bounds
        .iter()
        .map(|(n, b)| vec![fmt_float(*n), fmt_float(*b)])
        .collect();
    write_csv(&out.join("curie_weiss_lsi_lower.csv"), &["n", "lsi-lower-bound"], &rows)?;
    summary.set("sigma2-critical", suite.sigma2_c);
    summary.set("lsi-lower-exponent", suite.lsi_lower_exponent);
    summary.set("entropy-slope", suite.entropy_slope);
    summary.set("omega-second-at-zero", suite.omega_second_at_zero);
    summary.set("omega-fourth-at-zero", suite.omega_fourth_at_zero);
    summary.set("theta-exponent", suite.theta_exponent);
    if (p.kappa0 - 1.0).abs() < 1e-12 {
        summary.check(Check::band("sigma2-critical", suite.sigma2_c, 0.45, 0.47));
    }
    summary.check(Check::band("lsi-lower-exponent", suite.lsi_lower_exponent, 0.47, 0.53));
    summary.check(Check::band("entropy-slope", suite.entropy_slope, 0.23, 0.27));
    summary.check(Check::upper(
        "omega-second-degeneracy",
        suite.omega_second_at_zero.abs(),
        1e-3,
    ));
    summary.check(Check::is_true(
        "omega-fourth-positive",
        suite.omega_fourth_at_zero > 0.0,
    ));
    summary.check(Check::is_true(
        "omega-convex-off-zero",
        suite.omega_positive_off_zero,
    ));
    Ok(())
}
