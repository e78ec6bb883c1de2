use std::fs::File;
use std::io::{BufWriter, Write};

use branching_spectra::config::CheckKind;
use branching_spectra::montecarlo::fk::write_fk_csv;
use branching_spectra::montecarlo::{
    feynman_kac_times, qsd_sample_times, simulate_replicas, GridSampler, InitialSampler,
};
use branching_spectra::problem::{
    check_assumptions, growth_exponents_admissible, mu_h_integral, BoundParams, ModelSpec,
    QuadStatus, ScalarField,
};
use branching_spectra::spectral::io::{read_decomposition, write_eigenvalues, write_eigenvectors};
use branching_spectra::spectral::{decompose_checked, SpectralDecomposition};
use branching_spectra::verify::{
    check_gap_rate, check_qsd, check_total_mass, check_weighted_envelope, combine_verdicts,
    weighted_envelope_report, ConvergenceReport, Verdict,
};
use branching_spectra::Result;

use crate::{Context, EXIT_FAILED, EXIT_INCONCLUSIVE};

const ASSUMPTION_RADII: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
const ASSUMPTION_THETAS: [f64; 2] = [0.5, 1.0];

fn create(ctx: &Context, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(ctx.out.join(name))?))
}

fn compute_spectrum(ctx: &Context) -> Result<SpectralDecomposition> {
    let g = ctx.config.grid_section()?;
    let spec = &ctx.config.model;
    let grid = g.grid(spec.dimension)?;
    let (dec, stab) = decompose_checked(spec, &grid, g.modes, g.tol, g.box_threshold)?;
    eprintln!(
        "box check: radius {} -> {}, lambda0 moved {:e}, lambda1 moved {:e}",
        stab.radius, stab.enlarged_radius, stab.drift_lambda0, stab.drift_lambda1
    );
    Ok(dec)
}

/// A stored spectrum is reused only if it was written under the same config.
fn load_or_compute(ctx: &Context) -> Result<SpectralDecomposition> {
    let vals = ctx.out.join("eigenvalues.csv");
    let vecs = ctx.out.join("eigenvectors.csv");
    if let (Ok(a), Ok(b)) = (
        std::fs::read_to_string(&vals),
        std::fs::read_to_string(&vecs),
    ) {
        if a.lines().next() == Some(ctx.header.as_str()) {
            match read_decomposition(a.as_bytes(), b.as_bytes(), &ctx.config.model) {
                Ok(dec) => {
                    eprintln!("using stored spectrum in {}", ctx.out.display());
                    return Ok(dec);
                }
                Err(e) => eprintln!("stored spectrum rejected ({e}); recomputing"),
            }
        }
    }
    compute_spectrum(ctx)
}

pub fn spectrum(ctx: &Context) -> Result<u8> {
    let dec = compute_spectrum(ctx)?;
    let mut f = create(ctx, "eigenvalues.csv")?;
    writeln!(f, "{}", ctx.header)?;
    write_eigenvalues(&dec, &mut f)?;
    f.flush()?;

    let mut f = create(ctx, "eigenvectors.csv")?;
    writeln!(f, "{}", ctx.header)?;
    write_eigenvectors(&dec, &mut f)?;
    f.flush()?;

    let grid = dec.grid();
    let mut f = create(ctx, "ground_state.csv")?;
    writeln!(f, "{}", ctx.header)?;
    let coords: Vec<String> = (0..grid.dimension()).map(|k| format!("x{k}")).collect();
    writeln!(f, "{},phi_tilde_0,phi_0", coords.join(","))?;
    for node in 0..grid.node_count() {
        let x: Vec<String> = grid
            .coordinates(node)
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(
            f,
            "{},{},{}",
            x.join(","),
            dec.phi_tilde(0)[node],
            dec.phi(0)[node]
        )?;
    }
    f.flush()?;

    let l = dec.eigenvalues();
    println!(
        "lambda0={} lambda1={} gap={} modes={}",
        l[0],
        l[1],
        dec.gap(),
        dec.modes()
    );
    Ok(0)
}

pub fn simulate(ctx: &Context) -> Result<u8> {
    let sim = ctx.config.sim_section()?;
    let spec = &ctx.config.model;
    let cfg = sim.sim_config()?;
    let set = simulate_replicas(spec, &sim.start(spec.dimension), &cfg, &sim.times)?;
    let mut f = create(ctx, "replicas.csv")?;
    set.write_csv(&ctx.header, &mut f)?;
    f.flush()?;
    let mut f = create(ctx, "mass_summary.csv")?;
    set.write_summary_csv(&ctx.header, &mut f)?;
    f.flush()?;
    for (t, m) in sim.times.iter().zip(set.mean_mass()) {
        println!("t={t} mean_N_t={} std_error={}", m.mean, m.std_error);
    }
    if set.capped_count() > 0 {
        eprintln!("{} replicas hit the population cap", set.capped_count());
    }
    Ok(0)
}

pub fn fk(ctx: &Context) -> Result<u8> {
    let sim = ctx.config.sim_section()?;
    let spec = &ctx.config.model;
    let cfg = sim.sim_config()?;
    let phi = sim
        .phi
        .clone()
        .unwrap_or_else(|| ScalarField::constant(1.0));
    let est = feynman_kac_times(spec, &sim.start(spec.dimension), &sim.times, &phi, &cfg)?;
    let mut f = create(ctx, "fk.csv")?;
    write_fk_csv(&est, &ctx.header, &mut f)?;
    f.flush()?;
    for e in &est {
        println!(
            "t={} estimate={} std_error={}",
            e.t, e.estimate, e.std_error
        );
    }
    Ok(0)
}

pub fn qsd(ctx: &Context) -> Result<u8> {
    let sim = ctx.config.sim_section()?;
    let spec = &ctx.config.model;
    let cfg = sim.sim_config()?;
    let nu0 = if ctx.config.grid.is_some() {
        InitialSampler::Grid(GridSampler::ground_state(&load_or_compute(ctx)?)?)
    } else {
        InitialSampler::Point(sim.start(spec.dimension))
    };
    let samples = qsd_sample_times(spec, &nu0, &sim.times, &cfg)?;

    let mut f = create(ctx, "qsd_summary.csv")?;
    writeln!(f, "{}", ctx.header)?;
    writeln!(f, "# nu0={}", nu0.describe())?;
    writeln!(f, "t,normalizing_constant,std_error,ess,particles")?;
    for s in &samples {
        let z = s.normalizing_constant;
        writeln!(
            f,
            "{},{},{},{},{}",
            s.t,
            z.mean,
            z.std_error,
            s.ess,
            s.len()
        )?;
        println!(
            "t={} normalizing_constant={} std_error={} ess={}",
            s.t, z.mean, z.std_error, s.ess
        );
    }
    f.flush()?;

    let mut f = create(ctx, "qsd_particles.csv")?;
    writeln!(f, "{}", ctx.header)?;
    let coords: Vec<String> = (0..spec.dimension).map(|k| format!("x{k}")).collect();
    writeln!(f, "t,{},weight", coords.join(","))?;
    for s in &samples {
        for i in 0..s.len() {
            let x: Vec<String> = s.particle(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{},{},{}", s.t, x.join(","), s.weights[i])?;
        }
    }
    f.flush()?;
    Ok(0)
}

fn check_name(kind: CheckKind) -> &'static str {
    match kind {
        CheckKind::TotalMass => "total_mass",
        CheckKind::GapRate => "gap_rate",
        CheckKind::Qsd => "qsd",
        CheckKind::WeightedEnvelope => "weighted_envelope",
    }
}

fn run_check(
    ctx: &Context,
    kind: CheckKind,
    dec: &mut Option<SpectralDecomposition>,
) -> Result<ConvergenceReport> {
    let v = ctx.config.verify_section()?;
    let spec = &ctx.config.model;
    let settings = &v.tolerances;
    if kind != CheckKind::WeightedEnvelope && dec.is_none() {
        *dec = Some(load_or_compute(ctx)?);
    }
    match kind {
        CheckKind::TotalMass => {
            let sec = v.total_mass.as_ref().expect("validated");
            let cfg = ctx.config.sim_section()?.sim_config()?;
            check_total_mass(
                spec,
                dec.as_ref().unwrap(),
                &sec.x0,
                &sec.times,
                &cfg,
                settings,
            )
        }
        CheckKind::GapRate => {
            let sec = v.gap_rate.as_ref().expect("validated");
            let dec = dec.as_ref().unwrap();
            let phi = dec.grid().sample(|x| sec.phi.value(x));
            check_gap_rate(dec, &phi, &sec.times, settings)
        }
        CheckKind::Qsd => {
            let sec = v.qsd.as_ref().expect("validated");
            let cfg = ctx.config.sim_section()?.sim_config()?;
            check_qsd(
                spec,
                dec.as_ref().unwrap(),
                &sec.times,
                &sec.phis,
                &cfg,
                settings,
            )
        }
        CheckKind::WeightedEnvelope => {
            let sec = v.weighted_envelope.as_ref().expect("validated");
            let params = BoundParams::new(sec.branch);
            let outcome =
                check_weighted_envelope(spec, &params, &sec.phi, sec.box_radius, sec.quad_tol)?;
            Ok(weighted_envelope_report(&outcome))
        }
    }
}

pub fn verify(ctx: &Context) -> Result<u8> {
    let v = ctx.config.verify_section()?;
    let mut dec = None;
    let mut summary = create(ctx, "verify_summary.txt")?;
    writeln!(summary, "{}", ctx.header)?;
    let mut verdicts = Vec::new();
    for &kind in &v.checks {
        let name = check_name(kind);
        let report = run_check(ctx, kind, &mut dec)?;
        let mut f = create(ctx, &format!("verify_{name}.csv"))?;
        report.write_csv(&ctx.header, &mut f)?;
        f.flush()?;
        let mut f = create(ctx, &format!("verify_{name}.json"))?;
        writeln!(f, "{}", report.to_json()?)?;
        f.flush()?;
        let line = report.summary_line();
        writeln!(summary, "{line}")?;
        println!("{line}");
        verdicts.push(report.verdict);
    }
    summary.flush()?;
    Ok(match combine_verdicts(verdicts) {
        Verdict::Pass => 0,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        Verdict::Fail => EXIT_FAILED,
    })
}

pub fn bounds(ctx: &Context) -> Result<u8> {
    let b = ctx.config.bounds_section()?;
    let cells = b.cells()?;
    let spec = match b.growth_exponents {
        Some(g) => ModelSpec::growth_family(ctx.config.model.dimension, g.alpha, g.beta),
        None => ctx.config.model.clone(),
    };
    let mut f = create(ctx, "bounds.csv")?;
    writeln!(f, "{}", ctx.header)?;
    writeln!(
        f,
        "# branch={} r0={} box_radius={} quad_tol={}",
        b.branch, b.r0, b.box_radius, b.quad_tol
    )?;
    if let Some(g) = b.growth_exponents {
        let ok = growth_exponents_admissible(g.alpha, g.beta);
        writeln!(
            f,
            "# growth_exponents alpha={} beta={} admissible={ok}",
            g.alpha, g.beta
        )?;
        println!(
            "growth exponents alpha={} beta={} admissible={ok}",
            g.alpha, g.beta
        );
    }
    writeln!(f, "c,c0,integral,converged,status,radius")?;
    for p in &cells {
        let q = mu_h_integral(&spec, p, b.box_radius, b.quad_tol)?;
        let status = match q.status {
            QuadStatus::Converged => "converged",
            QuadStatus::Diverged { .. } => "diverged",
            QuadStatus::Unresolved => "unresolved",
        };
        writeln!(
            f,
            "{},{},{},{},{status},{}",
            p.c,
            p.c0,
            q.value,
            q.converged(),
            q.radius
        )?;
        println!("c={} c0={} integral={} {status}", p.c, p.c0, q.value);
    }
    f.flush()?;

    let report = check_assumptions(&spec, &ASSUMPTION_RADII, &ASSUMPTION_THETAS)?;
    let mut f = create(ctx, "assumptions.csv")?;
    writeln!(f, "{}", ctx.header)?;
    report.write_csv(&mut f)?;
    f.flush()?;
    println!("{}", report.verdict_line());
    Ok(0)
}
