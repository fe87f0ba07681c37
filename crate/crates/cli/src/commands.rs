use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use h2cert::consistency::{
    check_ic_source_match, check_mass_match, consistency_bound, provenance_notes, substitute_source, ProjectionSet,
    DEFAULT_C2_TOL, DEFAULT_MASS_TOL,
};
use h2cert::h2::{h2_error, h2_norm};
use h2cert::lpm::{assemble_lpm, load_lpm};
use h2cert::mor::{cure_accumulate, CureOptions, RomFamily, SearchOptions};
use h2cert::sim::{backward_euler, compare_outputs, default_dt, default_horizon, Trajectory};
use h2cert::{second_order_to_state_space, InputSignal, StateSpaceSystem};
use serde_json::json;

use crate::model::{load_dpm_model, Model};
use crate::{CheckArgs, H2Args, ReduceArgs, ReductionArgs, SimulateArgs};

fn cure_options(r: &ReductionArgs) -> CureOptions {
    CureOptions {
        search: SearchOptions {
            budget: r.seed_grid.len() + 24,
            grid: r.seed_grid.clone(),
        },
        ..CureOptions::default()
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn family_summary(family: &RomFamily<f64>) -> String {
    let mut s = String::new();
    let (ns, m, p) = family.fom_dims;
    let _ = writeln!(
        s,
        "FOM: {ns} states, {m} inputs, {p} outputs, |G| = {:.6e} ({:?})",
        family.fom_h2, family.fom_norm_source
    );
    if let Some(last) = family.last() {
        let _ = writeln!(
            s,
            "ROM order {}: certified error {:.6e}, relative {:.6e} (target {:.6e}, {:?})",
            last.order, last.certified_error, last.relative_error, family.target, family.stop_reason
        );
    }
    if !family.target_met() {
        let _ = writeln!(s, "target NOT met");
    }
    s
}

pub fn check(a: &CheckArgs) -> Result<u8> {
    if !(a.tol > 0.0 && a.tol < 1.0) {
        bail!("--tol must lie in (0, 1), got {}", a.tol);
    }
    let lpm = load_lpm(&a.lpm)?;
    let dpm = load_dpm_model(&a.dpm)?;

    // Steps 1-2: projections, C1/C2, state-space forms.
    let proj = ProjectionSet::from_models(&lpm, &dpm)?;
    let c1 = check_mass_match(&lpm, &dpm.system, DEFAULT_MASS_TOL);
    let c2 = check_ic_source_match(&lpm, &dpm, &proj, DEFAULT_C2_TOL)?;
    let lpm_ss = second_order_to_state_space(&assemble_lpm::<f64>(&lpm)?)?;
    let dpm_ss = second_order_to_state_space(&dpm.system)?;
    let lpm_sub = substitute_source(&lpm_ss, &proj, dpm_ss.inputs())?;

    // Steps 3-5: reduction, bound, verdict.
    let family = cure_accumulate(&dpm_ss, a.reduction.target, a.reduction.max_order, &cure_options(&a.reduction))?;
    let mut report = consistency_bound(&lpm_sub, &dpm_ss, &family, &dpm.inputs, a.tol)?.with_checks(Some(c1), Some(c2));
    report.notes.extend(provenance_notes(&dpm, &proj));
    if !family.target_met() {
        report
            .notes
            .push(format!("reduction stopped before the target {:e} ({:?})", family.target, family.stop_reason));
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out, "report.json", &report.to_json())?;
    write(&a.out, "bound.csv", &report.bound_csv())?;
    write(&a.out, "error_decay.csv", &family.error_decay_csv())?;
    let mut summary = report.summary();
    let mut code = if report.failures().is_empty() { 0 } else { 1 };
    if !report.failures().is_empty() {
        let _ = writeln!(summary, "failed: {}", report.failures().join(", "));
    }

    if a.validate {
        let at_rest = dpm.x0.iter().chain(&dpm.v0).all(|&v| v == 0.0);
        if !at_rest {
            let _ = writeln!(summary, "validation skipped: the time-domain bound needs zero initial conditions");
        } else {
            let v = validate(&lpm_sub, &dpm_ss, &dpm.inputs, a.dt, a.horizon, report.linf_bound)?;
            write(&a.out, "trajectory_dpm.csv", &v.dpm.to_csv())?;
            write(&a.out, "trajectory_lpm.csv", &v.lpm.to_csv())?;
            write(&a.out, "validation.json", &(serde_json::to_string_pretty(&v.record)? + "\n"))?;
            let _ = writeln!(
                summary,
                "a posteriori validation (backward Euler, dt {:.6e} s, horizon {:.6e} s): max |y_d - y_l| = {:.6e} vs bound {:.6e} -> {}",
                v.dt,
                v.horizon,
                v.linf,
                report.linf_bound,
                if v.contained { "contained" } else { "VIOLATED" }
            );
            if !v.contained {
                code = 1;
            }
        }
    }
    write(&a.out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(code)
}

struct Validation {
    dpm: Trajectory,
    lpm: Trajectory,
    dt: f64,
    horizon: f64,
    linf: f64,
    contained: bool,
    record: serde_json::Value,
}

fn validate(
    lpm_sub: &StateSpaceSystem<f64>,
    dpm_ss: &StateSpaceSystem<f64>,
    inputs: &[InputSignal],
    dt: Option<f64>,
    horizon: Option<f64>,
    bound: f64,
) -> Result<Validation> {
    let dt = match dt {
        Some(d) => d,
        None => default_dt(lpm_sub)?,
    };
    let horizon = match horizon {
        Some(h) => h,
        None => default_horizon(lpm_sub, inputs, dt)?,
    };
    let (yd, yl) = rayon::join(
        || backward_euler(dpm_ss, inputs, &vec![0.0; dpm_ss.states()], dt, horizon),
        || backward_euler(lpm_sub, inputs, &vec![0.0; lpm_sub.states()], dt, horizon),
    );
    let (yd, yl) = (yd?, yl?);
    let (rmse, linf) = compare_outputs(&yd, &yl)?;
    let contained = linf <= bound;
    let record = json!({
        "dt": dt,
        "horizon": horizon,
        "samples": yd.len(),
        "rmse": rmse,
        "linf_max_dev": linf,
        "linf_bound": bound,
        "contained": contained,
    });
    Ok(Validation {
        dpm: yd,
        lpm: yl,
        dt,
        horizon,
        linf,
        contained,
        record,
    })
}

pub fn reduce(a: &ReduceArgs) -> Result<u8> {
    let dpm = load_dpm_model(&a.dpm)?;
    let ss = second_order_to_state_space(&dpm.system)?;
    let family = cure_accumulate(&ss, a.reduction.target, a.reduction.max_order, &cure_options(&a.reduction))
        .context("reduction (the FOM must pass is_stable)")?;
    family.write(&a.out)?;
    let summary = family_summary(&family);
    write(&a.out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(if family.target_met() { 0 } else { 1 })
}

fn parse_signal(spec: &str) -> Result<InputSignal> {
    let text = match spec.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading signal file {path}"))?,
        None => spec.to_string(),
    };
    let s: InputSignal = serde_json::from_str(&text).with_context(|| format!("parsing signal {spec:?}"))?;
    s.validate()?;
    Ok(s)
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    let model = Model::load(&a.model)?;
    let ss = model.state_space()?;
    let inputs = match &a.signal {
        Some(spec) => vec![parse_signal(spec)?; ss.inputs()],
        None => model.inputs(),
    };
    let grid_sys = match (&a.lpm, &model) {
        (Some(p), _) => Some(second_order_to_state_space(&assemble_lpm::<f64>(&load_lpm(p)?)?)?),
        (None, Model::Lpm(_)) => Some(ss.clone()),
        (None, Model::Dpm(_)) => None,
    };
    let need_grid = || grid_sys.as_ref().context("DPM simulations need --dt and --horizon, or --lpm to derive them");
    let dt = match a.dt {
        Some(d) => d,
        None => default_dt(need_grid()?)?,
    };
    let horizon = match a.horizon {
        Some(h) => h,
        None => default_horizon(need_grid()?, &inputs, dt)?,
    };
    let tr = backward_euler(&ss, &inputs, &model.initial_state(), dt, horizon)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out, "trajectory.csv", &tr.to_csv())?;
    println!(
        "simulated {} states for {} steps (dt {:.6e} s, horizon {:.6e} s) -> {}",
        ss.states(),
        tr.len() - 1,
        dt,
        horizon,
        a.out.join("trajectory.csv").display()
    );
    Ok(0)
}

pub fn h2(a: &H2Args) -> Result<u8> {
    let sa = Model::load(&a.model_a)?.state_space()?;
    match &a.model_b {
        None => println!("h2_norm {:.16e}", h2_norm(&sa)?),
        Some(b) => {
            let sb = Model::load(b)?.state_space()?;
            println!("h2_error {:.16e}", h2_error(&sa, &sb)?);
        }
    }
    Ok(0)
}
