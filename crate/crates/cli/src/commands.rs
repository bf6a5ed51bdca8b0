//! The four batch commands: snapshot generation, multiscale coarse-matrix
//! reports, verification harnesses, and artifact aggregation. Every command
//! is deterministic given the configuration — results are identical for any
//! thread budget because all parallel maps are index-ordered and reductions
//! run sequentially over collected vectors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cglab_core::coarsegrain::{
    self, e_tilde_from_curve, extract_blocks, fit_defect_exponents, homogenization_error_es,
    scale_rows, ScaleReport, ScaleRun,
};
use cglab_core::fem::CellSet;
use cglab_core::fieldgen;
use cglab_core::geometry::AdaptedGeometry;
use cglab_core::harmonics::{abar_harmonic_basis, Poly};
use cglab_core::matrix::{loewner_gap, spectral_norm_sym, sym_part};
use cglab_core::snapshot;
use cglab_core::verify::{
    caccioppoli_ball, caccioppoli_profile, caccioppoli_ratio, corrector_space_dimension,
    excess_decay_curve, harmonic_approx_error, liouville_two_sided, BoundarySpec,
    VerificationRecord,
};
use cglab_core::{
    CoefficientField, DMat, Error, HomogenizedEstimate, Result,
};
use serde::Serialize;

use crate::config::{BoundaryChoice, Command, EnsembleSpec, ExperimentConfig, Harness};
use crate::output::{
    fmt_f64, mat_rows, sha256_hex, write_csv, write_json, Artifact, SnapshotRef,
};

/// Exit code for a completed command (0 success/PASS, 3 property FAIL). Hard
/// errors travel as `Err` and are mapped in main (1 validation, 2 solver).
pub type Exit = i32;

pub const EXIT_OK: Exit = 0;
pub const EXIT_FAIL: Exit = 3;

fn snapshot_name(seed: u64) -> String {
    format!("field_s{seed}.cgf1")
}

fn generate_field(cfg: &ExperimentConfig, seed: u64) -> Result<CoefficientField> {
    match &cfg.ensemble {
        EnsembleSpec::Constant { s, k } => fieldgen::constant_field(cfg.d, cfg.l_cells, s, k),
        EnsembleSpec::Checkerboard { sigma1, sigma2, p } => {
            fieldgen::checkerboard(cfg.d, cfg.l_cells, *sigma1, *sigma2, *p, seed)
        }
        EnsembleSpec::Laminate { sigma1, sigma2, axis } => {
            fieldgen::laminate(cfg.d, cfg.l_cells, *axis, *sigma1, *sigma2)
        }
        EnsembleSpec::Poisson {
            intensity,
            radius_cells,
            sigma_background,
            sigma_inclusion,
        } => fieldgen::poisson_inclusions(
            cfg.d,
            cfg.l_cells,
            *intensity,
            *radius_cells,
            *sigma_background,
            *sigma_inclusion,
            seed,
        ),
    }
}

/// Generate the configured ensemble, materializing one snapshot per seed in
/// the output directory. An existing snapshot file must agree byte for byte
/// with the configured generator — a stale file from a different experiment
/// is an error, never a silent input.
fn load_fields(cfg: &ExperimentConfig) -> Result<(Vec<CoefficientField>, Vec<SnapshotRef>)> {
    let mut fields = Vec::with_capacity(cfg.seeds.len());
    let mut refs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let field = generate_field(cfg, seed)?;
        let bytes = snapshot::to_bytes(&field);
        let name = snapshot_name(seed);
        let path = cfg.out_dir.join(&name);
        if path.exists() {
            let on_disk = fs::read(&path)?;
            if on_disk != bytes {
                return Err(Error::validation(format!(
                    "snapshot {} does not match the configured ensemble; \
                     remove it or point --out elsewhere",
                    path.display()
                )));
            }
        } else {
            fs::write(&path, &bytes)?;
        }
        refs.push(SnapshotRef { file: name, sha256: sha256_hex(&bytes) });
        fields.push(field);
    }
    Ok((fields, refs))
}

fn ensemble_tag(cfg: &ExperimentConfig) -> String {
    let gen = match &cfg.ensemble {
        EnsembleSpec::Constant { .. } => "constant",
        EnsembleSpec::Checkerboard { .. } => "checkerboard",
        EnsembleSpec::Laminate { .. } => "laminate",
        EnsembleSpec::Poisson { .. } => "poisson",
    };
    format!("{gen} d={} l={}", cfg.d, cfg.l_cells)
}

/// Homogenized estimate for the ensemble: exact for constant fields, the
/// ensemble coarse-matrix estimate at `est_level` (default: largest
/// configured scale) otherwise.
fn estimate_for(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<HomogenizedEstimate> {
    if let EnsembleSpec::Constant { s, k } = &cfg.ensemble {
        return HomogenizedEstimate::from_known(s.clone(), k.clone());
    }
    let level = match cfg.est_level {
        Some(l) => l,
        None => *cfg.require_m_levels()?.iter().max().unwrap(),
    };
    coarsegrain::estimate_homogenized(fields, level, &cfg.solver)
}

fn boundary_spec(choice: BoundaryChoice, side: f64) -> Result<BoundarySpec> {
    Ok(match choice {
        BoundaryChoice::Affine(e) => BoundarySpec::Affine(e),
        BoundaryChoice::Smooth { seed } => BoundarySpec::RandomSmooth { seed, side },
        BoundaryChoice::Cubic => BoundarySpec::Polynomial(Poly::monomial(3, 0, 1.0)?),
    })
}

fn geometry_for(cfg: &ExperimentConfig, est: Option<&HomogenizedEstimate>) -> Result<AdaptedGeometry> {
    if cfg.adapted {
        let est = est.ok_or_else(|| {
            Error::validation("adapted geometry needs a homogenized estimate")
        })?;
        AdaptedGeometry::from_s_bar(&est.s_bar, cfg.k0)
    } else {
        AdaptedGeometry::identity(cfg.d)
    }
}

// ---------------------------------------------------------------- field ----

#[derive(Serialize)]
struct PhaseStat {
    s00: f64,
    cells: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct FieldInfo {
    seed: u64,
    file: String,
    sha256: String,
    tag: String,
    phases: Vec<PhaseStat>,
}

/// Generate one snapshot per seed and print per-phase volume statistics.
pub fn cmd_field(cfg: &ExperimentConfig) -> Result<Exit> {
    let mut infos = Vec::new();
    for &seed in &cfg.seeds {
        let field = generate_field(cfg, seed)?;
        let bytes = snapshot::to_bytes(&field);
        let name = snapshot_name(seed);
        fs::write(cfg.out_dir.join(&name), &bytes)?;
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        let l = cfg.l_cells as i64;
        for c in 0..field.cell_count() as i64 {
            let z = if cfg.d == 1 { [c, 0] } else { [c / l, c % l] };
            *counts.entry(field.s_at(z)[0].to_bits()).or_default() += 1;
        }
        let total = field.cell_count() as f64;
        let phases: Vec<PhaseStat> = counts
            .iter()
            .map(|(bits, n)| PhaseStat {
                s00: f64::from_bits(*bits),
                cells: *n,
                fraction: *n as f64 / total,
            })
            .collect();
        let hash = sha256_hex(&bytes);
        let phase_text: Vec<String> = phases
            .iter()
            .map(|p| format!("s00={} {:.6}", fmt_f64(p.s00), p.fraction))
            .collect();
        println!("{name} sha256={hash} phases: {}", phase_text.join(", "));
        infos.push(FieldInfo {
            seed,
            file: name.clone(),
            sha256: hash.clone(),
            tag: field.tag().to_string(),
            phases,
        });
    }
    let snapshots: Vec<SnapshotRef> = infos
        .iter()
        .map(|i| SnapshotRef { file: i.file.clone(), sha256: i.sha256.clone() })
        .collect();
    let artifact = Artifact {
        kind: "field_set".to_string(),
        config: cfg.resolved.clone(),
        snapshots,
        payload: infos,
    };
    write_json(&cfg.out_dir.join("fields.json"), &artifact)?;
    Ok(EXIT_OK)
}

// -------------------------------------------------------------- coarsen ----

#[derive(Serialize)]
struct EstimateJson {
    a_bar: Vec<Vec<f64>>,
    s_bar: Vec<Vec<f64>>,
    k_bar: Vec<Vec<f64>>,
    s_upper: Vec<Vec<f64>>,
    s_lower: Vec<Vec<f64>>,
    block_discrepancy: f64,
    lambda_bar: f64,
    big_lambda_bar: f64,
    pi_sbar: f64,
    level_m: u32,
    samples: usize,
    failed_samples: usize,
}

impl EstimateJson {
    fn new(est: &HomogenizedEstimate) -> Self {
        EstimateJson {
            a_bar: mat_rows(&est.a_bar),
            s_bar: mat_rows(&est.s_bar),
            k_bar: mat_rows(&est.k_bar),
            s_upper: mat_rows(&est.s_upper),
            s_lower: mat_rows(&est.s_lower),
            block_discrepancy: est.block_discrepancy,
            lambda_bar: est.lambda_bar,
            big_lambda_bar: est.big_lambda_bar,
            pi_sbar: est.pi_sbar,
            level_m: est.level_m,
            samples: est.samples,
            failed_samples: est.failed_samples,
        }
    }
}

#[derive(Serialize)]
struct InvariantChecks {
    /// min eig of sym(s_upper - s_lower) of the top-level matrix, relative
    /// floor -1e-8
    ordering_gap: f64,
    /// smallest over consecutive levels of min eig(children mean - parents
    /// mean), relative floor -1e-6
    subadditivity_gap: f64,
    /// largest |A - A^t| entry of the top-level matrix over its norm
    relative_asymmetry: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CoarsenPayload {
    seed: u64,
    report: ScaleReport,
    checks: InvariantChecks,
}

fn mat_of_row(row: &[f64]) -> DMat {
    let n = (row.len() as f64).sqrt() as usize;
    DMat::from_row_slice(n, n, row)
}

fn run_checks(report: &ScaleReport) -> Result<InvariantChecks> {
    let mut ordering_gap = f64::INFINITY;
    let mut subadditivity_gap = f64::INFINITY;
    let mut relative_asymmetry: f64 = 0.0;
    let mut pass = true;
    for run in &report.runs {
        let top = mat_of_row(&run.rows.last().unwrap().mean_a);
        let scale = spectral_norm_sym(&sym_part(&top)).max(1.0);
        let asym = cglab_core::matrix::asymmetry(&top) / scale;
        relative_asymmetry = relative_asymmetry.max(asym);
        if asym > 1e-8 {
            pass = false;
        }
        let blocks = extract_blocks(&top)?;
        let gap = cglab_core::matrix::sym_eig_bounds(&sym_part(&(&blocks.s - &blocks.s_star))).0
            / scale;
        ordering_gap = ordering_gap.min(gap);
        if gap < -1e-8 {
            pass = false;
        }
        // level n+1 rows average over parents, level n over their children
        for pair in run.rows.windows(2) {
            let children = mat_of_row(&pair[0].mean_a);
            let parents = mat_of_row(&pair[1].mean_a);
            let gap = loewner_gap(&parents, &children) / scale;
            subadditivity_gap = subadditivity_gap.min(gap);
            if gap < -1e-6 {
                pass = false;
            }
        }
    }
    Ok(InvariantChecks { ordering_gap, subadditivity_gap, relative_asymmetry, pass })
}

/// Multiscale coarse-matrix report per seed: per-level summaries, the two
/// error quantities, the fitted decay law, and the invariant checks.
pub fn cmd_coarsen(cfg: &ExperimentConfig) -> Result<Exit> {
    let m_levels = cfg.require_m_levels()?.to_vec();
    let (fields, refs) = load_fields(cfg)?;
    let est = estimate_for(cfg, &fields)?;
    let geom = geometry_for(cfg, Some(&est))?;
    write_json(
        &cfg.out_dir.join("estimate.json"),
        &Artifact {
            kind: "homogenized_estimate".to_string(),
            config: cfg.resolved.clone(),
            snapshots: refs.clone(),
            payload: EstimateJson::new(&est),
        },
    )?;

    let mut row_csv: Vec<Vec<String>> = Vec::new();
    let mut summary_csv: Vec<Vec<String>> = Vec::new();
    let mut solver_failures: Vec<String> = Vec::new();
    let mut all_pass = true;
    for ((&seed, field), sref) in cfg.seeds.iter().zip(fields.iter()).zip(refs.iter()) {
        let mut runs = Vec::new();
        let mut fit_points: Vec<(u32, u32, f64)> = Vec::new();
        let mut failed: Option<Error> = None;
        for &m in &m_levels {
            let cube = geom.cube(m, [0, 0])?;
            let step = (|| -> Result<ScaleRun> {
                let rows = scale_rows(field, &geom, &cube, &est, &cfg.solver, cfg.max_solves)?;
                let r: Vec<f64> = rows.iter().map(|row| row.defect_r).collect();
                let e_tilde = e_tilde_from_curve(&r, cfg.s_exponent.min(1.0))?;
                let e_s = homogenization_error_es(
                    field,
                    &geom,
                    &cube,
                    cfg.s_exponent,
                    &est,
                    &cfg.solver,
                    cfg.max_solves,
                )?;
                Ok(ScaleRun { m, e_s, e_tilde, rows })
            })();
            match step {
                Ok(run) => {
                    for row in &run.rows {
                        fit_points.push((m, row.n, row.defect_r));
                        row_csv.push(vec![
                            seed.to_string(),
                            m.to_string(),
                            row.n.to_string(),
                            row.subcube_count.to_string(),
                            fmt_f64(row.max_deviation),
                            fmt_f64(row.defect_r),
                        ]);
                    }
                    summary_csv.push(vec![
                        seed.to_string(),
                        m.to_string(),
                        fmt_f64(run.e_s),
                        fmt_f64(run.e_tilde),
                    ]);
                    println!(
                        "coarsen seed {seed} m={m}: e_s={} e_tilde={}",
                        fmt_f64(run.e_s),
                        fmt_f64(run.e_tilde)
                    );
                    runs.push(run);
                }
                Err(e @ (Error::Validation(_) | Error::Format(_) | Error::Io(_))) => {
                    return Err(e)
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        let report = ScaleReport {
            d: cfg.d,
            s_exponent: cfg.s_exponent,
            runs,
            fit: fit_defect_exponents(&fit_points),
        };
        let checks = run_checks(&report)?;
        if !checks.pass {
            all_pass = false;
        }
        let mut artifact = Artifact {
            kind: "scale_report".to_string(),
            config: cfg.resolved.clone(),
            snapshots: vec![sref.clone()],
            payload: CoarsenPayload { seed, report, checks },
        };
        if let Some(e) = failed {
            // partial report: keep what completed, flag the failure
            artifact.kind = "scale_report_partial".to_string();
            solver_failures.push(format!("seed {seed}: {e}"));
        }
        write_json(&cfg.out_dir.join(format!("coarsen_s{seed}.json")), &artifact)?;
    }
    write_csv(
        &cfg.out_dir.join("coarsen_rows.csv"),
        &["seed", "m", "n", "subcube_count", "max_deviation", "defect_r"],
        &row_csv,
    )?;
    write_csv(
        &cfg.out_dir.join("coarsen_summary.csv"),
        &["seed", "m", "e_s", "e_tilde"],
        &summary_csv,
    )?;
    if !solver_failures.is_empty() {
        for f in &solver_failures {
            eprintln!("solver failure: {f}");
        }
        return Ok(2);
    }
    if !all_pass {
        println!("FAIL: invariant checks");
        return Ok(EXIT_FAIL);
    }
    println!("PASS");
    Ok(EXIT_OK)
}

// --------------------------------------------------------------- verify ----

fn write_record(
    cfg: &ExperimentConfig,
    refs: &[SnapshotRef],
    record: &VerificationRecord,
    harness: Harness,
) -> Result<()> {
    record.validate()?;
    let artifact = Artifact {
        kind: "verification_record".to_string(),
        config: cfg.resolved.clone(),
        snapshots: refs.to_vec(),
        payload: record,
    };
    write_json(
        &cfg.out_dir.join(format!("verify_{}.json", harness.name())),
        &artifact,
    )?;
    // CSV: one row per sample, columns are the sorted union of value keys
    let mut keys: Vec<String> = Vec::new();
    for s in &record.samples {
        for k in s.values.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let mut header: Vec<&str> = vec!["label"];
    header.extend(keys.iter().map(|s| s.as_str()));
    let rows: Vec<Vec<String>> = record
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![s.label.clone()];
            for k in &keys {
                row.push(s.values.get(k).map(|v| fmt_f64(*v)).unwrap_or_default());
            }
            row
        })
        .collect();
    write_csv(
        &cfg.out_dir.join(format!("verify_{}.csv", harness.name())),
        &header,
        &rows,
    )?;
    Ok(())
}

fn finish(record: &VerificationRecord) -> Exit {
    match record.pass {
        Some(true) => {
            println!("PASS");
            EXIT_OK
        }
        Some(false) => {
            println!("FAIL: {}", record.note);
            EXIT_FAIL
        }
        None => {
            println!("no threshold configured; measurements recorded");
            EXIT_OK
        }
    }
}

fn require_key(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| {
        Error::validation(format!("missing required key '{key}' in section [verify]"))
    })
}

pub fn cmd_verify(cfg: &ExperimentConfig, harness: Harness) -> Result<Exit> {
    let (fields, refs) = load_fields(cfg)?;
    let record = match harness {
        Harness::Caccioppoli => verify_caccioppoli(cfg, &fields)?,
        Harness::Approx => verify_approx(cfg, &fields)?,
        Harness::Liouville => verify_liouville(cfg, &fields)?,
        Harness::Excess => verify_excess(cfg, &fields)?,
        Harness::Dims => verify_dims(cfg, &fields)?,
    };
    write_record(cfg, &refs, &record, harness)?;
    for s in &record.samples {
        let vals: Vec<String> =
            s.values.iter().map(|(k, v)| format!("{k}={}", fmt_f64(*v))).collect();
        println!("{}: {}", s.label, vals.join(" "));
    }
    Ok(finish(&record))
}

fn verify_caccioppoli(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<VerificationRecord> {
    let max_ratio = require_key(cfg.verify.max_ratio, "max_ratio")?;
    let est;
    let lambda = match cfg.verify.lambda_bar {
        Some(l) => {
            est = None;
            l
        }
        None => {
            let e = estimate_for(cfg, fields)?;
            let l = e.lambda_bar;
            est = Some(e);
            l
        }
    };
    let geom = geometry_for(cfg, est.as_ref())?;
    let mut record = VerificationRecord::new("caccioppoli", ensemble_tag(cfg));
    let mut worst: f64 = 0.0;
    let ball = cfg.verify.ball_r.zip(cfg.verify.ball_big_r);
    for (&seed, field) in cfg.seeds.iter().zip(fields.iter()) {
        if let Some((r, big_r)) = ball {
            let boundary = boundary_spec(cfg.verify.boundary, 2.0 * big_r)?;
            let rep = caccioppoli_ball(
                field,
                &geom,
                [0.0, 0.0],
                r,
                big_r,
                &boundary,
                lambda,
                &cfg.solver,
            )?;
            worst = worst.max(rep.ratio);
            record.push_sample(
                format!("s{seed}_ball"),
                &[
                    ("ratio", rep.ratio),
                    ("r", rep.r),
                    ("big_r", rep.big_r),
                    ("one_minus_fraction", rep.one_minus_fraction),
                ],
            );
        }
        for &m in cfg.require_m_levels()? {
            let cube = geom.cube(m, [0, 0])?;
            let boundary = boundary_spec(cfg.verify.boundary, 3f64.powi(m as i32))?;
            if cfg.verify.radii.is_empty() {
                let rep =
                    caccioppoli_ratio(field, &geom, &cube, &boundary, lambda, &cfg.solver)?;
                worst = worst.max(rep.ratio);
                record.push_sample(
                    format!("s{seed}_m{m}"),
                    &[
                        ("ratio", rep.ratio),
                        ("energy_inner", rep.energy_inner),
                        ("l2_outer", rep.l2_outer),
                    ],
                );
            } else {
                let prof = caccioppoli_profile(
                    field,
                    &geom,
                    &cube,
                    &boundary,
                    lambda,
                    &cfg.verify.radii,
                    &cfg.solver,
                )?;
                for (r, ratio) in &prof.rows {
                    worst = worst.max(*ratio);
                    record.push_sample(
                        format!("s{seed}_m{m}_r{r}"),
                        &[("ratio", *ratio), ("fraction", *r)],
                    );
                }
                record.push_sample(
                    format!("s{seed}_m{m}_fit"),
                    &[("kappa_hat", prof.kappa_hat)],
                );
            }
        }
    }
    record.set_summary("max_ratio", worst);
    record.set_summary("threshold", max_ratio);
    record.pass = Some(worst <= max_ratio);
    record.note = format!("max ratio {} vs threshold {}", fmt_f64(worst), fmt_f64(max_ratio));
    Ok(record)
}

fn verify_approx(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<VerificationRecord> {
    let threshold = require_key(cfg.verify.max_total_over_ref, "max_total_over_ref")?;
    let est = estimate_for(cfg, fields)?;
    let geom = geometry_for(cfg, Some(&est))?;
    let mut record = VerificationRecord::new("approx", ensemble_tag(cfg));
    let mut worst: f64 = 0.0;
    for (&seed, field) in cfg.seeds.iter().zip(fields.iter()) {
        for &m in cfg.require_m_levels()? {
            let cube = geom.cube(m, [0, 0])?;
            let boundary = boundary_spec(cfg.verify.boundary, 3f64.powi(m as i32))?;
            let err = harmonic_approx_error(
                field,
                &geom,
                &cube,
                &est,
                cfg.s_exponent,
                &boundary,
                &cfg.solver,
            )?;
            worst = worst.max(err.total_over_ref);
            record.push_sample(
                format!("s{seed}_m{m}"),
                &[
                    ("l2_term", err.l2_term),
                    ("hs_term", err.hs_term),
                    ("energy_ref", err.energy_ref),
                    ("total_over_ref", err.total_over_ref),
                ],
            );
        }
    }
    record.set_summary("max_total_over_ref", worst);
    record.set_summary("threshold", threshold);
    record.pass = Some(worst <= threshold);
    record.note = format!(
        "max total/ref {} vs threshold {}",
        fmt_f64(worst),
        fmt_f64(threshold)
    );
    Ok(record)
}

fn verify_liouville(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<VerificationRecord> {
    if cfg.verify.scales_n.is_empty() {
        return Err(Error::validation(
            "missing required key 'scales_n' in section [verify]",
        ));
    }
    let est = estimate_for(cfg, fields)?;
    let geom = geometry_for(cfg, Some(&est))?;
    let theta = cfg.verify.theta_hat.unwrap_or(cfg.gamma);
    let mut record = VerificationRecord::new("liouville", ensemble_tag(cfg));
    let mut means = Vec::new();
    for (&seed, field) in cfg.seeds.iter().zip(fields.iter()) {
        let rep = liouville_two_sided(
            field,
            &geom,
            &est,
            cfg.s_exponent,
            &cfg.verify.scales_n,
            cfg.verify.x_hat,
            theta,
            &cfg.solver,
        )?;
        for row in &rep.rows {
            let mut values = vec![
                ("l2_term", row.l2_term),
                ("hs_term", row.hs_term),
                ("lhs", row.lhs),
                ("rhs_surrogate", row.rhs_surrogate),
            ];
            if row.ratio.is_finite() {
                values.push(("ratio_vs_surrogate", row.ratio));
            }
            record.push_sample(format!("s{seed}_e{}_n{}", row.element, row.n), &values);
        }
        if let Some(m) = rep.mean_successive_ratio {
            means.push(m);
        }
    }
    let pass;
    if means.is_empty() {
        record.note = "all scale curves exactly zero (homogeneous field)".to_string();
        pass = true;
    } else {
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        record.set_summary("mean_successive_ratio", mean);
        record.set_summary("threshold", cfg.verify.max_mean_ratio);
        pass = mean <= cfg.verify.max_mean_ratio;
        record.note = format!(
            "mean successive scale ratio {} vs threshold {}",
            fmt_f64(mean),
            fmt_f64(cfg.verify.max_mean_ratio)
        );
    }
    record.pass = Some(pass);
    Ok(record)
}

fn verify_excess(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<VerificationRecord> {
    if cfg.verify.radii.is_empty() {
        return Err(Error::validation(
            "missing required key 'radii' in section [verify]",
        ));
    }
    let est = estimate_for(cfg, fields)?;
    let geom = geometry_for(cfg, Some(&est))?;
    let k = cfg.verify.excess_k;
    let basis = abar_harmonic_basis(cfg.d, k, &est.s_bar, &geom.q0())?;
    let m = *cfg.require_m_levels()?.iter().max().unwrap();
    let cube = geom.cube(m, [0, 0])?;
    let boundary = boundary_spec(cfg.verify.boundary, 3f64.powi(m as i32))?;
    let mut record = VerificationRecord::new("excess", ensemble_tag(cfg));
    let mut worst: f64 = 0.0;
    let mut any_ratio = false;
    for (&seed, field) in cfg.seeds.iter().zip(fields.iter()) {
        let cs = CellSet::new(cfg.d, geom.cube_cells(&cube))?;
        let (u, _) = cglab_core::fem::solve_dirichlet(
            field,
            &cs,
            |x| boundary.eval(x),
            &cfg.solver,
        )?;
        let center = geom.cube_center(&cube);
        let curve = excess_decay_curve(
            &u.values,
            &cs,
            &geom,
            center,
            k,
            &cfg.verify.radii,
            &basis,
        )?;
        for row in &curve.rows {
            record.push_sample(
                format!("s{seed}_r{}", row.r),
                &[
                    ("excess", row.excess),
                    ("p_norm", row.p_norm),
                    ("gram_condition", row.gram_condition),
                ],
            );
        }
        for (i, q) in curve.successive_ratios.iter().enumerate() {
            any_ratio = true;
            worst = worst.max(*q);
            record.push_sample(
                format!("s{seed}_step{i}"),
                &[("ratio_successive", *q)],
            );
        }
    }
    if any_ratio {
        record.set_summary("max_successive_ratio", worst);
        record.set_summary("threshold", cfg.verify.max_excess_ratio);
        record.pass = Some(worst <= cfg.verify.max_excess_ratio);
        record.note = format!(
            "max successive excess ratio {} vs threshold {}",
            fmt_f64(worst),
            fmt_f64(cfg.verify.max_excess_ratio)
        );
    } else {
        record.pass = Some(true);
        record.note = "excess vanished at every radius".to_string();
    }
    Ok(record)
}

fn verify_dims(
    cfg: &ExperimentConfig,
    fields: &[CoefficientField],
) -> Result<VerificationRecord> {
    if cfg.verify.k_list.is_empty() {
        return Err(Error::validation(
            "missing required key 'k_list' in section [verify]",
        ));
    }
    if cfg.verify.expected_dims.len() != cfg.verify.k_list.len() {
        return Err(Error::validation(format!(
            "[verify] expected_dims has {} entries for {} k values",
            cfg.verify.expected_dims.len(),
            cfg.verify.k_list.len()
        )));
    }
    let geom = geometry_for(cfg, None)?;
    let level = *cfg.require_m_levels()?.iter().max().unwrap();
    let mut record = VerificationRecord::new("dims", ensemble_tag(cfg));
    let mut pass = true;
    let mut min_gap_seen = f64::INFINITY;
    for (&seed, field) in cfg.seeds.iter().zip(fields.iter()) {
        for (&k, &expected) in cfg.verify.k_list.iter().zip(cfg.verify.expected_dims.iter()) {
            let rep = corrector_space_dimension(field, &geom, k, level, &cfg.solver)?;
            if rep.count != expected {
                pass = false;
            }
            let mut values = vec![
                ("count", rep.count as f64),
                ("expected", expected as f64),
                ("family", rep.family as f64),
            ];
            if let Some(g) = rep.gap {
                if g < cfg.verify.min_gap {
                    pass = false;
                }
                min_gap_seen = min_gap_seen.min(g);
                values.push(("gap", g));
            }
            record.push_sample(format!("s{seed}_k{k}"), &values);
        }
    }
    if min_gap_seen.is_finite() {
        record.set_summary("min_gap", min_gap_seen);
    }
    record.set_summary("min_gap_required", cfg.verify.min_gap);
    record.pass = Some(pass);
    record.note = if pass {
        "all dimension counts match".to_string()
    } else {
        "dimension count or spectral gap mismatch".to_string()
    };
    Ok(record)
}

// --------------------------------------------------------------- report ----

#[derive(Serialize)]
struct ReportEntry {
    file: String,
    kind: String,
    pass: Option<bool>,
    snapshots_ok: bool,
}

#[derive(Serialize)]
struct ReportSummary {
    entries: Vec<ReportEntry>,
    all_pass: bool,
}

/// Aggregate the JSON artifacts in the output directory, re-hash their input
/// snapshots, and write a one-table overview.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Exit> {
    let mut names: Vec<String> = fs::read_dir(&cfg.out_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json") && n != "report.json")
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::validation(format!(
            "no artifacts found in {}",
            cfg.out_dir.display()
        )));
    }
    let mut entries = Vec::new();
    let mut all_pass = true;
    let mut hash_failure = false;
    let mut csv_rows = Vec::new();
    for name in &names {
        let path = cfg.out_dir.join(name);
        let text = fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("parsing {}: {e}", path.display())))?;
        let kind = value
            .get("kind")
            .and_then(|v| v.as_str())
            .unwrap_or("unknown")
            .to_string();
        let pass = value.get("payload").and_then(|p| p.get("pass")).and_then(|v| v.as_bool());
        let mut snapshots_ok = true;
        if let Some(snaps) = value.get("snapshots").and_then(|v| v.as_array()) {
            for s in snaps {
                let (Some(file), Some(expected)) = (
                    s.get("file").and_then(|v| v.as_str()),
                    s.get("sha256").and_then(|v| v.as_str()),
                ) else {
                    snapshots_ok = false;
                    continue;
                };
                match fs::read(cfg.out_dir.join(file)) {
                    Ok(bytes) => {
                        if sha256_hex(&bytes) != expected {
                            snapshots_ok = false;
                        }
                    }
                    Err(_) => snapshots_ok = false,
                }
            }
        }
        if !snapshots_ok {
            hash_failure = true;
        }
        if pass == Some(false) {
            all_pass = false;
        }
        println!(
            "{name}: kind={kind} pass={} snapshots_ok={snapshots_ok}",
            match pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "-",
            }
        );
        csv_rows.push(vec![
            name.clone(),
            kind.clone(),
            match pass {
                Some(true) => "true".to_string(),
                Some(false) => "false".to_string(),
                None => String::new(),
            },
            snapshots_ok.to_string(),
        ]);
        entries.push(ReportEntry { file: name.clone(), kind, pass, snapshots_ok });
    }
    let summary = ReportSummary { entries, all_pass: all_pass && !hash_failure };
    write_json(&cfg.out_dir.join("report.json"), &summary)?;
    write_csv(
        &cfg.out_dir.join("report.csv"),
        &["file", "kind", "pass", "snapshots_ok"],
        &csv_rows,
    )?;
    if hash_failure {
        return Err(Error::validation(
            "snapshot provenance check failed: content hash mismatch or missing file",
        ));
    }
    if !all_pass {
        println!("FAIL: at least one artifact records a failed check");
        return Ok(EXIT_FAIL);
    }
    println!("PASS");
    Ok(EXIT_OK)
}

/// Verb dispatch once the configuration is loaded and overrides applied.
/// A declared [run] command must match the verb, except `report`, which
/// aggregates the artifacts of any command's output directory.
pub fn dispatch(cfg: &ExperimentConfig, command: Command) -> Result<Exit> {
    if let Some(declared) = cfg.command {
        if declared != command && command != Command::Report {
            return Err(Error::validation(format!(
                "config declares command '{:?}' but the command line asked for '{:?}'",
                declared, command
            )));
        }
    }
    match command {
        Command::Field => cmd_field(cfg),
        Command::Coarsen => cmd_coarsen(cfg),
        Command::Verify(h) => cmd_verify(cfg, h),
        Command::Report => cmd_report(cfg),
    }
}

/// Process exit code for an error by its kind: configuration and input
/// problems are 1, solver breakdowns 2.
pub fn error_exit_code(e: &Error) -> Exit {
    match e {
        Error::Validation(_) | Error::Io(_) | Error::Format(_) => 1,
        Error::Solver { .. } | Error::Singular(_) => 2,
    }
}

/// Path helper shared by main and the tests.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}
