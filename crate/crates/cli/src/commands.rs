use anyhow::Result;
use harness_core::dual::DualEngine;
use harness_core::dynamics::{generate_epochs, simulate_epochs, SamplingPlan, Simulator};
use harness_core::gibbs::build_gaussian;
use harness_core::ground_state::{
    decay_bound_check, kernel_row_exact, kernel_row_mc, solve_exact, solve_jacobi, solve_monte_carlo,
    solve_neumann, split_ground_state, GroundStateResult, KernelRow,
};
use harness_core::rng::derive_seed;
use harness_core::verify::{
    check_beta_scaling, check_detailed_balance, check_dlr_conditionals, check_ergodic_forgetting,
    check_stationary_law, check_survival_mass, check_thermo_limit, check_variance_bound, Boundary,
    CheckReport, IDENTITY_TOL, Z_THRESHOLD,
};
use harness_core::{HeightField, Site};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{CliError, Command, Format, Instance, RunConfig};
use crate::output::{coord_cells, coord_header, num, ArtifactWriter, Csv};

const SITE_ORDER: &str = "lexicographic";
const UNITS: &str = "dimensionless heights; time in units of the per-site clock rate";

/// Growth of the configured box used by checks that need walks to stay away
/// from the boundary.
const FREE_MARGIN: u32 = 40;

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub inst: Instance,
    pub out: &'a mut ArtifactWriter,
}

/// Runs `command` and returns the check reports it produced.
pub fn dispatch(command: Command, ctx: &mut Context) -> Result<Vec<CheckReport>> {
    match command {
        Command::GroundState => ground_state(ctx),
        Command::Kernel => kernel(ctx),
        Command::Simulate => simulate(ctx),
        Command::DualCheck => dual_check(ctx),
        Command::GibbsVerify => gibbs_verify(ctx),
        Command::FullSuite => full_suite(ctx),
    }
}

fn field_json(f: &HeightField) -> serde_json::Value {
    json!({
        "sites": f.sites().collect::<Vec<_>>(),
        "values": f.values().collect::<Vec<_>>(),
    })
}

fn field_csv(dim: usize, columns: &[(&str, &HeightField)]) -> Csv {
    let mut header = coord_header(dim);
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    let mut t = Csv::new(&header);
    for s in columns[0].1.sites() {
        let mut row = coord_cells(s);
        row.extend(columns.iter().map(|(_, f)| num(f.get_or(s, f64::NAN))));
        t.row(&row);
    }
    t
}

fn ground_state(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let Instance { bx, kernel, params, d, y, .. } = &ctx.inst;
    let run = &ctx.cfg.run;
    let tol = run.tol.unwrap_or(1e-10);
    let method = run.method.as_deref().unwrap_or("exact");
    let result: GroundStateResult = match method {
        "exact" => solve_exact(bx, d, y, params, kernel)?,
        "jacobi" => solve_jacobi(bx, d, y, params, kernel, tol, run.max_iter.unwrap_or(1_000_000))?,
        "neumann" => solve_neumann(bx, d, y, params, kernel, tol)?,
        "monte_carlo" => {
            let seed = ctx.cfg.seed(Command::GroundState)?;
            solve_monte_carlo(bx, d, y, params, kernel, run.n_walks.unwrap_or(10_000), seed)?
        }
        other => {
            return Err(CliError::config(format!(
                "run.method `{other}` is not one of exact, jacobi, neumann, monte_carlo"
            ))
            .into())
        }
    };
    let split = if method == "exact" {
        Some(split_ground_state(bx, d, y, params, kernel)?)
    } else {
        None
    };

    if ctx.cfg.wants(Format::Json) {
        let mut doc = json!({
            "schema": "harness-ground-state/1",
            "units": UNITS,
            "site_order": SITE_ORDER,
            "method": result.method,
            "residual_inf": result.residual_inf,
            "iterations": result.iterations,
            "sites": result.m.sites().collect::<Vec<_>>(),
            "m": result.m.values().collect::<Vec<_>>(),
        });
        if let Some((m_l, r_l)) = &split {
            doc["m_lambda"] = json!(m_l.values().collect::<Vec<_>>());
            doc["r_lambda"] = json!(r_l.values().collect::<Vec<_>>());
        }
        ctx.out.json("ground_state.json", &doc)?;
    }
    if ctx.cfg.wants(Format::Csv) {
        let table = match &split {
            Some((m_l, r_l)) => field_csv(bx.dim(), &[("m", &result.m), ("m_lambda", m_l), ("r_lambda", r_l)]),
            None => field_csv(bx.dim(), &[("m", &result.m)]),
        };
        ctx.out.csv("ground_state.csv", &table)?;
    }
    println!(
        "ground-state: {} sites, method {method}, residual {:.3e}, {} iterations",
        bx.len(),
        result.residual_inf,
        result.iterations
    );
    Ok(Vec::new())
}

fn decay_report(row: &KernelRow, ctx: &Context) -> CheckReport {
    match decay_bound_check(row, &ctx.inst.params, &ctx.inst.kernel) {
        Ok(rep) => CheckReport::new("decay_bound", -rep.worst_slack, 0.0)
            .detail("entries_checked", rep.entries_checked)
            .detail("worst_site", json!(rep.worst_site)),
        Err(harness_core::Error::BoundViolated { site, entry, bound }) => {
            CheckReport::new("decay_bound", entry - bound, 0.0).detail("violating_site", json!(site))
        }
        Err(e) => CheckReport::new("decay_bound", f64::INFINITY, 0.0).detail("error", e.to_string()),
    }
}

fn kernel(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let Instance { bx, kernel, params, .. } = &ctx.inst;
    let site = match &ctx.cfg.run.site {
        Some(c) => Site::new(c.clone()),
        None => bx.center(),
    };
    if !bx.contains(&site) {
        return Err(CliError::config(format!("run.site {site} is not inside the box")).into());
    }
    let exact = kernel_row_exact(bx, params, kernel, &site)?;
    let mut reports = vec![decay_report(&exact, ctx)];

    let mc = match ctx.cfg.run.n_walks {
        Some(n) => {
            let seed = ctx.cfg.seed(Command::Kernel)?;
            Some((n, kernel_row_mc(bx, params, kernel, &site, n, seed)?))
        }
        None => None,
    };
    let entries: Vec<_> = exact.killed.iter().map(|e| ("killed", e)).chain(exact.absorbed.iter().map(|e| ("absorbed", e))).collect();
    let mut z_scores = Vec::new();
    if let Some((n, row)) = &mc {
        let sampled = row.killed.iter().chain(&row.absorbed);
        for ((_, e), m) in entries.iter().zip(sampled) {
            let se = (e.mass * (1.0 - e.mass) / *n as f64).sqrt();
            let z = if se > 0.0 {
                (m.mass - e.mass).abs() / se
            } else if m.mass == e.mass {
                0.0
            } else {
                f64::INFINITY
            };
            z_scores.push((m.mass, z));
        }
        let worst = z_scores.iter().map(|(_, z)| *z).fold(0.0, f64::max);
        reports.push(CheckReport::new("kernel_row_mc", worst, Z_THRESHOLD).detail("n_walks", *n));
    }

    if ctx.cfg.wants(Format::Json) {
        let doc = json!({
            "schema": "harness-kernel-row/1",
            "site_order": SITE_ORDER,
            "start": site,
            "exact": exact,
            "monte_carlo": mc.as_ref().map(|(_, r)| r),
        });
        ctx.out.json("kernel_row.json", &doc)?;
    }
    if ctx.cfg.wants(Format::Csv) {
        let mut header = coord_header(bx.dim());
        header.extend(["kind", "exact"].map(String::from));
        if mc.is_some() {
            header.extend(["monte_carlo", "z"].map(String::from));
        }
        let mut t = Csv::new(&header);
        for (k, (kind, e)) in entries.iter().enumerate() {
            let mut row = coord_cells(&e.site);
            row.push(kind.to_string());
            row.push(num(e.mass));
            if let Some((m, z)) = z_scores.get(k) {
                row.push(num(*m));
                row.push(num(*z));
            }
            t.row(&row);
        }
        ctx.out.csv("kernel_row.csv", &t)?;
    }
    Ok(reports)
}

fn epochs_doc(epochs: &harness_core::dynamics::EpochList) -> serde_json::Value {
    json!({
        "schema": "harness-epochs/1",
        "units": UNITS,
        "ordering": "by time, then site",
        "epochs": epochs,
    })
}

fn simulate(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let seed = ctx.cfg.seed(Command::Simulate)?;
    let window = ctx.cfg.window(Command::Simulate)?;
    let Instance { bx, kernel, params, d, y, z_init } = &ctx.inst;
    let epochs = generate_epochs(bx, window, params, seed)?;
    let sim = Simulator::new(bx, y, d, params, kernel)?;
    let n = ctx.cfg.run.snapshots.unwrap_or(10).max(1);
    let times: Vec<f64> = (0..=n)
        .map(|k| window.0 + (window.1 - window.0) * k as f64 / n as f64)
        .collect();
    let mut state = sim.stencil().dense(z_init)?;
    let snaps = sim.run_snapshots(&mut state, &epochs, &times)?;
    let final_state = sim.stencil().field(&state);

    if ctx.cfg.wants(Format::Json) {
        ctx.out.json("epochs.json", &epochs_doc(&epochs))?;
        let doc = json!({
            "schema": "harness-final-state/1",
            "units": UNITS,
            "site_order": SITE_ORDER,
            "time": window.1,
            "state": field_json(&final_state),
        });
        ctx.out.json("final_state.json", &doc)?;
    }
    if ctx.cfg.wants(Format::Csv) {
        let mut header = vec!["time".to_string()];
        header.extend(coord_header(bx.dim()));
        header.push("height".into());
        let mut t = Csv::new(&header);
        for (time, values) in &snaps {
            for (s, v) in sim.stencil().sites().iter().zip(values) {
                let mut row = vec![num(*time)];
                row.extend(coord_cells(s));
                row.push(num(*v));
                t.row(&row);
            }
        }
        ctx.out.csv("trajectory.csv", &t)?;
    }
    println!("simulate: {} epochs on {} sites over [{}, {}]", epochs.len(), bx.len(), window.0, window.1);
    Ok(Vec::new())
}

fn duality_report(ctx: &Context, seed: u64, window: (f64, f64)) -> Result<(CheckReport, Csv, serde_json::Value)> {
    let Instance { bx, kernel, params, d, y, z_init } = &ctx.inst;
    let epochs = generate_epochs(bx, window, params, seed)?;
    let forward = simulate_epochs(bx, z_init, y, d, params, kernel, &epochs)?;
    let engine = DualEngine::new(&epochs, bx, params, kernel)?;
    let mut header = coord_header(bx.dim());
    header.extend(
        ["forward", "reconstructed", "abs_diff", "noise", "data", "boundary", "initial"].map(String::from),
    );
    let mut t = Csv::new(&header);
    let mut worst = 0.0f64;
    for (site, terms) in engine.reconstruct_all(z_init, y, d)? {
        let f = forward.get(&site)?;
        let r = terms.value();
        let diff = (f - r).abs();
        worst = worst.max(diff);
        let mut row = coord_cells(&site);
        row.extend([f, r, diff, terms.noise, terms.data, terms.boundary, terms.initial].map(num));
        t.row(&row);
    }
    let report = CheckReport::new("duality", worst, IDENTITY_TOL)
        .detail("n_epochs", epochs.len())
        .detail("seed", seed);
    Ok((report, t, epochs_doc(&epochs)))
}

fn dual_check(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let seed = ctx.cfg.seed(Command::DualCheck)?;
    let window = ctx.cfg.window(Command::DualCheck)?;
    let (report, table, epochs) = duality_report(ctx, seed, window)?;
    if ctx.cfg.wants(Format::Csv) {
        ctx.out.csv("dual_check.csv", &table)?;
    }
    if ctx.cfg.wants(Format::Json) {
        ctx.out.json("epochs.json", &epochs)?;
    }
    Ok(vec![report])
}

type Check<'a> = (String, Box<dyn Fn() -> harness_core::Result<CheckReport> + Send + Sync + 'a>);

/// Runs independent checks concurrently. Failures to run become failed
/// reports carrying the error message; the output is sorted by name.
fn run_checks(checks: Vec<Check>) -> Vec<CheckReport> {
    let mut reports: Vec<CheckReport> = checks
        .into_par_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckReport::new(name, f64::INFINITY, 0.0).detail("error", e.to_string()))
        })
        .collect();
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

fn gibbs_checks<'a>(ctx: &'a Context, seed: u64) -> Result<Vec<Check<'a>>> {
    let run = &ctx.cfg.run;
    let plan = SamplingPlan {
        burn_in: run.burn_in.unwrap_or(50.0),
        thin: run.thin.unwrap_or(10.0),
        n_samples: run.n_samples.unwrap_or(10_000),
    };
    let n_states = run.n_states.unwrap_or(1000);
    let betas = run.betas.clone().unwrap_or_else(|| vec![0.25, 1.0, 4.0]);
    if betas.iter().any(|b| b.is_nan() || *b <= 0.0) {
        return Err(CliError::config("run.betas must be positive").into());
    }
    let i = &ctx.inst;
    let mut checks: Vec<Check> = vec![
        (
            "stationary_law".into(),
            Box::new(move || check_stationary_law(&i.bx, &i.y, &i.d, &i.params, &i.kernel, &plan, derive_seed(seed, 1))),
        ),
        (
            "detailed_balance".into(),
            Box::new(move || check_detailed_balance(&i.bx, &i.y, &i.d, &i.params, &i.kernel, n_states, derive_seed(seed, 2))),
        ),
        (
            "dlr_conditionals".into(),
            Box::new(move || check_dlr_conditionals(&i.bx, &i.y, &i.d, &i.params, &i.kernel, n_states, derive_seed(seed, 3))),
        ),
    ];
    for beta in betas {
        checks.push((
            format!("beta_scaling[{beta}]"),
            Box::new(move || check_beta_scaling(&i.bx, &i.y, &i.d, &i.params, &i.kernel, beta)),
        ));
    }
    Ok(checks)
}

fn write_gaussian(ctx: &mut Context) -> Result<()> {
    let Instance { bx, kernel, params, d, y, .. } = &ctx.inst;
    let spec = build_gaussian(bx, y, d, params, kernel)?;
    if ctx.cfg.wants(Format::Json) {
        ctx.out.json("gaussian.json", &spec.to_export())?;
    }
    Ok(())
}

fn gibbs_verify(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let seed = ctx.cfg.seed(Command::GibbsVerify)?;
    write_gaussian(ctx)?;
    let checks = gibbs_checks(ctx, seed)?;
    Ok(run_checks(checks))
}

fn full_suite(ctx: &mut Context) -> Result<Vec<CheckReport>> {
    let seed = ctx.cfg.seed(Command::FullSuite)?;
    let window = match ctx.cfg.run.window {
        Some(_) => ctx.cfg.window(Command::FullSuite)?,
        None => (0.0, 10.0),
    };
    write_gaussian(ctx)?;
    let (duality, table, _) = duality_report(ctx, derive_seed(seed, 4), window)?;
    if ctx.cfg.wants(Format::Csv) {
        ctx.out.csv("dual_check.csv", &table)?;
    }

    let run = &ctx.cfg.run;
    let i = &ctx.inst;
    let n_seeds = run.n_seeds.unwrap_or(1000).max(2);
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| derive_seed(seed, 100 + k)).collect();
    let u_grid = run.u_grid.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0]);
    let shifted = i.z_init.map(|v| v + 1.0);
    let free = i.bx.grown(FREE_MARGIN);
    let tol = run.tol.unwrap_or(1e-6);
    let nested: Vec<_> = [0, 4, 8, 16].into_iter().map(|w| i.bx.grown(w)).collect();

    let mut checks = gibbs_checks(ctx, seed)?;
    let (seeds, u_grid, shifted, free, nested) = (&seeds, &u_grid, &shifted, &free, &nested);
    checks.push((
        "ergodic_forgetting".into(),
        Box::new(move || {
            check_ergodic_forgetting(&i.bx, &i.y, &i.d, &i.params, &i.kernel, (&i.z_init, shifted), u_grid, seeds)
        }),
    ));
    checks.push((
        "variance_bound".into(),
        Box::new(move || check_variance_bound(free, &i.params, &i.kernel, &[1.0, 2.0, 5.0, 10.0], seeds)),
    ));
    checks.push((
        "survival_mass".into(),
        Box::new(move || check_survival_mass(free, &i.params, &i.kernel, 2.0, seeds)),
    ));
    checks.push((
        "thermo_limit".into(),
        Box::new(move || {
            let y_choices = [Boundary::Constant(0.0), Boundary::Constant(7.0)];
            check_thermo_limit(&i.d, &y_choices, &i.params, &i.kernel, nested, tol)
        }),
    ));
    let mut reports = run_checks(checks);
    reports.push(duality);
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(reports)
}
