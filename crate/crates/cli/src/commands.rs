use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use nonholo::jump::{self, Verdict};
use nonholo::models::roller_racer;
use nonholo::models::{Model, ModelParams, RollerRacerParams};
use nonholo::simulate::{oscillation_sweep, write_csv, DtRule, RollerRacerTwoScale};
use nonholo::{integrate, projection_set, ControlSignal, ReducedState, RhsSelector, SystemSpec};

use crate::config::{self, RunConfig};
use crate::{Common, Failure};

fn load(args: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = config::load(&args.config).map_err(Failure::Config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.samples {
        cfg.scan.samples = n;
        cfg.oracle.samples = n;
    }
    if let Some(tol) = args.tol {
        if !(tol > 0.0) {
            return Err(Failure::Config(format!("--tol must be positive, got {tol}")));
        }
        cfg.scan.tol = tol;
        cfg.oracle.tol = tol;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", path.display())))
}

fn write_report(path: &Path, text: &str) -> Result<(), Failure> {
    print!("{text}");
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|()| w.flush())
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn racer_params(cfg: &RunConfig, model: &Model) -> Result<RollerRacerParams, Failure> {
    match model.params {
        ModelParams::RollerRacer(p) => Ok(p),
        _ => Err(Failure::Config(format!(
            "model.name: this command needs a Roller Racer model, got `{}`",
            cfg.model.name
        ))),
    }
}

/// The model's system, or its corrupted variant when requested.
fn system(cfg: &RunConfig, model: &Model) -> Result<SystemSpec, Failure> {
    if cfg.model.corrupt_metric == 0.0 {
        return Ok(model.spec.clone());
    }
    if model.name != "roller-racer" {
        return Err(Failure::Config("model.corrupt_metric: only supported for roller-racer".into()));
    }
    let p = racer_params(cfg, model)?;
    Ok(roller_racer::corrupted_spec(p, cfg.model.corrupt_metric)?)
}

fn initial_state(cfg: &RunConfig, model: &Model, spec: &SystemSpec, control: &ControlSignal, t0: f64) -> Result<ReducedState, Failure> {
    let init = cfg.initial.as_ref().ok_or(Failure::Config("missing section `initial`".into()))?;
    let (n, m) = (spec.n_free(), spec.n_control());
    let u0 = control.u(t0);
    if u0.len() != m {
        return Err(Failure::Config(format!("control: {} channels, model has {m}", u0.len())));
    }
    let q = if init.q.len() == n {
        let mut q = DVector::zeros(n + m);
        q.rows_mut(0, n).copy_from_slice(&init.q);
        q.rows_mut(n, m).copy_from(&u0);
        q
    } else if init.q.len() == n + m {
        let q = DVector::from_column_slice(&init.q);
        let gap = (q.rows(n, m) - &u0).amax();
        if gap > 1e-12 {
            return Err(Failure::Config(format!(
                "initial.q: controlled coordinates differ from u(t0) by {gap:e}; give only the {n} free coordinates to fill them in"
            )));
        }
        q
    } else {
        return Err(Failure::Config(format!(
            "initial.q: expected {n} or {} entries, got {}",
            n + m,
            init.q.len()
        )));
    };
    let p_i = match (&init.p_i, &init.xi) {
        (Some(_), Some(_)) => return Err(Failure::Config("initial: give either p_i or xi, not both".into())),
        (Some(p), None) => {
            if p.len() != n + m {
                return Err(Failure::Config(format!("initial.p_i: expected {} entries, got {}", n + m, p.len())));
            }
            let p = DVector::from_column_slice(p);
            let proj = projection_set(spec, &q)?;
            let off = (&proj.pstar_i * &p - &p).amax();
            if off > 1e-8 * p.amax().max(1.0) {
                return Err(Failure::Config(format!("initial.p_i: not annihilated by P*_II + P*_III (off by {off:e})")));
            }
            p
        }
        (None, Some(xi)) => {
            let frame = model
                .frame
                .as_ref()
                .ok_or_else(|| Failure::Config(format!("initial.xi: model `{}` has no frame", model.name)))?;
            let frame = frame.frame_at(&q)?;
            if xi.len() != frame.dim_i() {
                return Err(Failure::Config(format!("initial.xi: expected {} entries, got {}", frame.dim_i(), xi.len())));
            }
            frame.block_i_covector(&DVector::from_column_slice(xi))
        }
        (None, None) => DVector::zeros(n + m),
    };
    Ok(ReducedState::new(q, p_i))
}

pub fn simulate(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let model = cfg.build_model().map_err(Failure::Config)?;
    let spec = system(&cfg, &model)?;
    let control = cfg.control().map_err(Failure::Config)?;
    let (integrator, use_frame) = cfg.integrator().map_err(Failure::Config)?;
    let state = initial_state(&cfg, &model, &spec, &control, integrator.t0)?;
    let selector = if use_frame {
        let frame = model
            .frame
            .as_ref()
            .ok_or_else(|| Failure::Config(format!("integrator.rhs: model `{}` has no frame", model.name)))?;
        RhsSelector::Frame(frame.as_ref())
    } else {
        RhsSelector::Ambient
    };
    let traj = integrate(&spec, selector, &state, &control, &integrator)?;
    let mut w = create(&args.out)?;
    write_csv(&traj, &mut w).map_err(|e| Failure::Config(format!("cannot write {}: {e}", args.out.display())))?;
    eprintln!(
        "{} rows, max constraint residual {:e}, max d'Alembert residual {:e}, max |p_I| {:e}",
        traj.len(),
        traj.max_constraint_residual(),
        traj.max_dalembert_residual(),
        traj.max_p_i_norm()
    );
    Ok(())
}

pub fn check_fit(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let model = cfg.build_model().map_err(Failure::Config)?;
    let spec = system(&cfg, &model)?;
    let sampler = model.sampler(cfg.seed);
    let (n, tol) = (cfg.scan.samples, cfg.scan.tol);
    let mut psi = jump::psi_scan(&spec, &sampler, n, tol);
    let theta = jump::theta_on_iii_scan(&spec, &sampler, n, tol);
    psi.theorem62 = jump::theorem62_check(
        &spec,
        model.reference_frame.as_ref(),
        model.flat_normal_bundle,
        &sampler,
        n.min(100),
        1e-9,
    )
    .ok();

    let verdict = match (psi.verdict, theta.verdict) {
        (a, b) if a == b => a,
        _ => Verdict::Inconclusive,
    };
    let mut text = format!("model: {}\nseed: {}\n\n{psi}\n{theta}\n", model.name, cfg.seed);
    writeln!(text, "verdict: {verdict}").unwrap();
    write_report(&args.out, &text)?;
    match verdict {
        Verdict::Fit => Ok(()),
        Verdict::NotFit => Err(Failure::Rejected(format!(
            "not fit for jumps: |Psi| = {:e} at {:?}",
            psi.max_psi_norm,
            psi.worst_point.as_ref().map(|q| q.as_slice().to_vec()).unwrap_or_default()
        ))),
        Verdict::Inconclusive => Err(Failure::Inconclusive(format!(
            "scans inconclusive or in disagreement (psi: {}, theta_on_III: {})",
            psi.verdict, theta.verdict
        ))),
    }
}

pub fn oracle_compare(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let model = cfg.build_model().map_err(Failure::Config)?;
    let params = racer_params(&cfg, &model)?;
    let form = cfg.closed_form().map_err(Failure::Config)?;
    let spec = system(&cfg, &model)?;
    let (n, tol) = (cfg.oracle.samples, cfg.oracle.tol);
    let report = roller_racer::oracle_compare(&spec, &params, form, n, cfg.seed)?;

    let mut text = String::new();
    writeln!(text, "model: {}", model.name).unwrap();
    writeln!(text, "closed_form: {}", cfg.model.closed_form).unwrap();
    writeln!(text, "seed: {}", cfg.seed).unwrap();
    writeln!(text, "samples: {}", report.samples).unwrap();
    writeln!(text, "resampled: {}", report.resampled).unwrap();
    writeln!(text, "tol: {tol:e}").unwrap();
    writeln!(text, "max_relative_deviation: {:e}", report.max_deviation).unwrap();
    if let Some(w) = &report.worst {
        writeln!(text, "worst_q: {:?}", w.q).unwrap();
        writeln!(text, "worst_xi: {:?}", w.xi).unwrap();
        writeln!(text, "worst_udot: {:?}", w.udot).unwrap();
        writeln!(text, "pipeline: {:?}", w.pipeline).unwrap();
        writeln!(text, "closed: {:?}", w.closed).unwrap();
    }
    write_report(&args.out, &text)?;
    if report.resampled > 0 {
        eprintln!("resampled {} singular draws", report.resampled);
    }
    if report.samples == 0 {
        eprintln!("warning: no samples");
        return Ok(());
    }
    if report.max_deviation > tol {
        return Err(Failure::Rejected(format!(
            "max relative deviation {:e} exceeds {tol:e}",
            report.max_deviation
        )));
    }
    Ok(())
}

pub fn vibrate(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let model = cfg.build_model().map_err(Failure::Config)?;
    let params = racer_params(&cfg, &model)?;
    let form = cfg.closed_form().map_err(Failure::Config)?;
    let v = cfg.vibrate().map_err(Failure::Config)?;
    let two_scale = RollerRacerTwoScale { params, form };
    let rule = DtRule {
        eps_fraction: v.eps_fraction,
        min_steps_per_period: v.min_steps_per_period,
    };
    let res = oscillation_sweep(
        &two_scale,
        &DVector::from_column_slice(&v.x0),
        &DVector::from_column_slice(&v.ubar),
        &DVector::from_column_slice(&v.k),
        &v.epsilons,
        v.t_final,
        rule,
    )?;

    let names = ["q1", "q2", "q3", "xi"];
    let mut header = vec!["eps".to_string(), "dt".to_string()];
    header.extend(names.iter().map(|n| format!("endpoint_{n}")));
    header.extend(names.iter().map(|n| format!("averaged_{n}")));
    header.extend(["error".to_string(), "ratio".to_string()]);
    let mut text = header.join(",") + "\n";
    for row in &res.rows {
        let mut fields = vec![format!("{:?}", row.eps), format!("{:?}", row.dt)];
        fields.extend(row.endpoint.iter().map(|x| format!("{x:?}")));
        fields.extend(row.averaged_endpoint.iter().map(|x| format!("{x:?}")));
        fields.push(format!("{:?}", row.error));
        fields.push(row.ratio.map(|r| format!("{r:?}")).unwrap_or_default());
        text += &(fields.join(",") + "\n");
    }
    let mut w = create(&args.out)?;
    w.write_all(text.as_bytes())
        .and_then(|()| w.flush())
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", args.out.display())))?;
    if res.rows.iter().any(|r| r.error > 0.0) && !res.errors_decrease() {
        eprintln!("warning: endpoint errors do not decrease with eps");
    }
    Ok(())
}
