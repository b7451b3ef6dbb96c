//! Scenario execution: sweeps evaluated in parallel, results buffered and
//! emitted in deterministic sweep order as CSV and JSON lines.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use negtrans::error::Error;
use negtrans::field::{
    compute_coefficients, CoefficientRun, DetectorParams, FieldModel, QuadratureConfig,
};
use negtrans::harvest::{harvested_negativity_2nd, psd_repair, resource_state, HarvestCoefficients};
use negtrans::nogo::{
    check_first_order, negativity_scaling, second_order_operator, FirstOrderCheck, TimeGrid,
    ToyTransmissionModel,
};
use negtrans::qstate::PureState;
use negtrans::teleport::{
    schmidt_aligned_input, teleport_channel, teleported_negativity_2nd, CorrectionStrategy,
};

use crate::config::{
    CouplingChoice, RunConfig, Scenario, StrategyChoice, SweepAxis,
};

/// Failure classes mapped onto distinct exit codes.
#[derive(Debug)]
pub enum RunError {
    /// Exit code 2: the configuration does not parse or validate.
    Config(String),
    /// Exit code 3: quadrature or stepping failed to converge.
    Numerical(String),
    /// Exit code 4: an invariant was violated while running.
    Invariant(String),
    /// Exit code 1: input/output failure.
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Invariant(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Numerical(m) | Self::Invariant(m) | Self::Io(m) => m,
        }
    }
}

fn classify(err: Error) -> RunError {
    match err {
        Error::QuadratureNonConvergence { .. }
        | Error::StepHalvingNonConvergence { .. }
        | Error::FitIllConditioned(_) => RunError::Numerical(err.to_string()),
        Error::InvariantViolation(_)
        | Error::NotDensityMatrix(_)
        | Error::NotHermitian { .. }
        | Error::NotNormalized(_)
        | Error::NotUnitary(_) => RunError::Invariant(err.to_string()),
        _ => RunError::Config(err.to_string()),
    }
}

pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub verbose: bool,
}

/// One assignment of the swept parameters.
#[derive(Debug, Clone)]
struct SweepPoint {
    index: usize,
    values: Vec<(String, f64)>,
}

fn cartesian_points(axes: &[SweepAxis]) -> Vec<SweepPoint> {
    let mut points = vec![SweepPoint { index: 0, values: Vec::new() }];
    for axis in axes {
        let values = RunConfig::axis_values(axis);
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for &v in &values {
                let mut values = p.values.clone();
                values.push((axis.parameter.clone(), v));
                next.push(SweepPoint { index: 0, values });
            }
        }
        points = next;
    }
    for (i, p) in points.iter_mut().enumerate() {
        p.index = i;
    }
    points
}

/// Detector pair and input weight with one sweep point applied.
struct PointSetup {
    det_a: DetectorParams,
    det_b: DetectorParams,
    p: f64,
}

fn apply_point(config: &RunConfig, point: &SweepPoint) -> Result<PointSetup, RunError> {
    let da = config.detector_a.as_ref().expect("validated");
    let db = config.detector_b.as_ref().expect("validated");
    let mut det_a = DetectorParams::new(
        "A'",
        da.coupling,
        da.gap,
        da.position.clone(),
        da.switching_center,
        da.switching_width,
        da.smearing_width,
    )
    .map_err(classify)?;
    let mut det_b = DetectorParams::new(
        "B",
        db.coupling,
        db.gap,
        db.position.clone(),
        db.switching_center,
        db.switching_width,
        db.smearing_width,
    )
    .map_err(classify)?;
    let mut p = config.input.p;
    for (name, value) in &point.values {
        match name.as_str() {
            "separation" => {
                det_b.position = det_a.position.clone();
                det_b.position[0] += value;
            }
            "gap_a" => det_a.gap = *value,
            "gap_b" => det_b.gap = *value,
            "coupling_a" => det_a.coupling = *value,
            "coupling_b" => det_b.coupling = *value,
            "switching_width_a" => det_a.switching_width = *value,
            "switching_width_b" => det_b.switching_width = *value,
            "switching_center_b" => det_b.switching_center = *value,
            "smearing_width_a" => det_a.smearing_width = *value,
            "smearing_width_b" => det_b.smearing_width = *value,
            "p" => p = *value,
            _ => unreachable!("validated parameter"),
        }
    }
    Ok(PointSetup { det_a, det_b, p })
}

#[derive(Debug, Clone, Serialize)]
struct CoefficientFields {
    l_aa: f64,
    l_aa_error: f64,
    l_bb: f64,
    l_bb_error: f64,
    l_ab_re: f64,
    l_ab_im: f64,
    l_ab_error: f64,
    m_re: f64,
    m_im: f64,
    m_abs: f64,
    m_error: f64,
    phi: f64,
    cauchy_schwarz_ok: bool,
    perturbative_ok: bool,
}

impl CoefficientFields {
    fn new(run: &CoefficientRun, coeff: &HarvestCoefficients) -> Self {
        Self {
            l_aa: coeff.l_aa,
            l_aa_error: run.l_aa.error,
            l_bb: coeff.l_bb,
            l_bb_error: run.l_bb.error,
            l_ab_re: coeff.l_ab.re,
            l_ab_im: coeff.l_ab.im,
            l_ab_error: run.l_ab.error,
            m_re: coeff.m.re,
            m_im: coeff.m.im,
            m_abs: coeff.m.norm(),
            m_error: run.m.error,
            phi: coeff.phi(),
            cauchy_schwarz_ok: coeff.cauchy_schwarz_ok(1e-8),
            perturbative_ok: !coeff.outside_perturbative_regime(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct HarvestRecord {
    index: usize,
    sweep: Vec<(String, f64)>,
    #[serde(flatten)]
    coefficients: CoefficientFields,
    negativity_harvested: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TeleportRecord {
    index: usize,
    sweep: Vec<(String, f64)>,
    p: f64,
    strategy: StrategyChoice,
    coefficients: CoefficientFields,
    negativity_harvested: f64,
    negativity_closed_form: f64,
    negativity_exact_channel: f64,
}

#[derive(Debug, Clone, Serialize)]
struct CompareRecord {
    index: usize,
    sweep: Vec<(String, f64)>,
    p: f64,
    strategy: StrategyChoice,
    #[serde(flatten)]
    coefficients: CoefficientFields,
    negativity_harvested: f64,
    negativity_teleported: f64,
    negativity_transmitted_order2: f64,
    transmission_verdict: &'static str,
}

#[derive(Debug, Clone, Serialize)]
struct NogoLambdaRecord {
    model: usize,
    lambda: f64,
    negativity: f64,
    min_pt_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
struct NogoModelSummary {
    model: usize,
    field_dim: usize,
    first_order_max: Option<f64>,
    first_order_vacuous: bool,
    sender_independence: f64,
    min_correction_eigenvalue: f64,
    quad_coeff_min_eigenvalue: f64,
    quad_coeff_negative_part: f64,
    negativity_exponent: Option<f64>,
}

fn coefficients_from_run(run: &CoefficientRun) -> Result<HarvestCoefficients, RunError> {
    let laa = run.l_aa.value;
    let lbb = run.l_bb.value;
    for (name, v) in [("L_AA", laa), ("L_BB", lbb)] {
        if v.im.abs() > 1e-10 * v.re.abs().max(1e-300) {
            return Err(RunError::Invariant(format!(
                "{name} has imaginary part {} against real {}",
                v.im, v.re
            )));
        }
    }
    HarvestCoefficients::new(laa.re.max(0.0), lbb.re.max(0.0), run.l_ab.value, run.m.value)
        .map_err(classify)
}

fn quadrature_config(config: &RunConfig) -> QuadratureConfig {
    QuadratureConfig {
        k_max_multiplier: config.quadrature.k_max_multiplier,
        time_window_multiplier: config.quadrature.time_window_multiplier,
        rel_tol: config.quadrature.rel_tol,
        abs_tol: config.quadrature.abs_tol,
        max_segments: config.quadrature.max_segments,
    }
}

fn strategy_for(choice: StrategyChoice, coeff: &HarvestCoefficients) -> CorrectionStrategy {
    match choice {
        StrategyChoice::Standard => CorrectionStrategy::Standard,
        StrategyChoice::PhaseCorrected => CorrectionStrategy::PhaseCorrected { phi: coeff.phi() },
    }
}

fn exact_channel_negativity(
    coeff: &HarvestCoefficients,
    p: f64,
    strategy: &CorrectionStrategy,
) -> Result<f64, RunError> {
    let resource = psd_repair(&resource_state(coeff)).map_err(classify)?;
    let basis_g = PureState::basis_state(&[2], 0);
    let basis_e = PureState::basis_state(&[2], 1);
    let input = schmidt_aligned_input(p).map_err(classify)?;
    let result =
        teleport_channel(&input, &resource, (&basis_g, &basis_e), strategy).map_err(classify)?;
    result.xi.negativity(0).map_err(classify)
}

pub fn run(config: &RunConfig, options: &RunOptions) -> Result<(), RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&options.out_dir)
        .map_err(|e| RunError::Io(format!("creating {}: {e}", options.out_dir.display())))?;

    pool.install(|| match config.scenario {
        Scenario::Harvest => run_harvest(config, options),
        Scenario::Teleport => run_teleport(config, options),
        Scenario::Compare => run_compare(config, options),
        Scenario::Nogo => run_nogo(config, options),
    })?;

    let meta = serde_json::json!({
        "scenario": config.scenario,
        "seed": options.seed,
        "config": config,
    });
    write_text(
        &options.out_dir.join("run_meta.json"),
        &format!("{}\n", serde_json::to_string_pretty(&meta).expect("serializable")),
    )
}

fn run_harvest(config: &RunConfig, options: &RunOptions) -> Result<(), RunError> {
    let model = FieldModel::new(config.field.dimension, config.field.mass).map_err(classify)?;
    let cfg = quadrature_config(config);
    let points = cartesian_points(&config.sweep);
    if options.verbose {
        eprintln!("harvest: {} sweep point(s)", points.len());
    }
    let records: Vec<HarvestRecord> = points
        .par_iter()
        .map(|point| -> Result<HarvestRecord, RunError> {
            let setup = apply_point(config, point)?;
            let run = compute_coefficients(&model, &setup.det_a, &setup.det_b, &cfg)
                .map_err(classify)?;
            let coeff = coefficients_from_run(&run)?;
            Ok(HarvestRecord {
                index: point.index,
                sweep: point.values.clone(),
                coefficients: CoefficientFields::new(&run, &coeff),
                negativity_harvested: harvested_negativity_2nd(&coeff),
            })
        })
        .collect::<Result<_, _>>()?;

    let header = [
        sweep_headers(&config.sweep),
        vec![
            "index", "l_aa", "l_aa_error", "l_bb", "l_bb_error", "l_ab_re", "l_ab_im",
            "l_ab_error", "m_re", "m_im", "m_abs", "m_error", "phi", "cauchy_schwarz_ok",
            "perturbative_ok", "negativity_harvested",
        ]
        .into_iter()
        .map(String::from)
        .collect(),
    ]
    .concat();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = sweep_cells(&r.sweep);
            row.extend([
                r.index.to_string(),
                fmt(r.coefficients.l_aa),
                fmt(r.coefficients.l_aa_error),
                fmt(r.coefficients.l_bb),
                fmt(r.coefficients.l_bb_error),
                fmt(r.coefficients.l_ab_re),
                fmt(r.coefficients.l_ab_im),
                fmt(r.coefficients.l_ab_error),
                fmt(r.coefficients.m_re),
                fmt(r.coefficients.m_im),
                fmt(r.coefficients.m_abs),
                fmt(r.coefficients.m_error),
                fmt(r.coefficients.phi),
                r.coefficients.cauchy_schwarz_ok.to_string(),
                r.coefficients.perturbative_ok.to_string(),
                fmt(r.negativity_harvested),
            ]);
            row
        })
        .collect();
    write_outputs(options, &header, &rows, &records)
}

fn run_teleport(config: &RunConfig, options: &RunOptions) -> Result<(), RunError> {
    let model = FieldModel::new(config.field.dimension, config.field.mass).map_err(classify)?;
    let cfg = quadrature_config(config);
    let points = cartesian_points(&config.sweep);
    if options.verbose {
        eprintln!("teleport: {} sweep point(s)", points.len());
    }
    let records: Vec<TeleportRecord> = points
        .par_iter()
        .map(|point| -> Result<TeleportRecord, RunError> {
            let setup = apply_point(config, point)?;
            let run = compute_coefficients(&model, &setup.det_a, &setup.det_b, &cfg)
                .map_err(classify)?;
            let coeff = coefficients_from_run(&run)?;
            let strategy = strategy_for(config.strategy, &coeff);
            let closed =
                teleported_negativity_2nd(setup.p, &coeff, &strategy).map_err(classify)?;
            let exact = exact_channel_negativity(&coeff, setup.p, &strategy)?;
            Ok(TeleportRecord {
                index: point.index,
                sweep: point.values.clone(),
                p: setup.p,
                strategy: config.strategy,
                coefficients: CoefficientFields::new(&run, &coeff),
                negativity_harvested: harvested_negativity_2nd(&coeff),
                negativity_closed_form: closed,
                negativity_exact_channel: exact,
            })
        })
        .collect::<Result<_, _>>()?;

    // when p is a sweep axis it already has a column
    let p_header: &[&str] = if config.sweep.iter().any(|a| a.parameter == "p") { &[] } else { &["p"] };
    let header = [
        sweep_headers(&config.sweep),
        ["index"]
            .iter()
            .chain(p_header)
            .chain(&[
                "strategy", "l_aa", "l_aa_error", "l_bb", "l_bb_error", "l_ab_re",
                "l_ab_im", "l_ab_error", "m_re", "m_im", "m_abs", "m_error", "phi",
                "negativity_harvested", "negativity_teleported", "negativity_exact_channel",
            ])
            .map(|s| s.to_string())
            .collect(),
    ]
    .concat();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = sweep_cells(&r.sweep);
            row.push(r.index.to_string());
            if !p_header.is_empty() {
                row.push(fmt(r.p));
            }
            row.extend([
                strategy_name(r.strategy).to_string(),
                fmt(r.coefficients.l_aa),
                fmt(r.coefficients.l_aa_error),
                fmt(r.coefficients.l_bb),
                fmt(r.coefficients.l_bb_error),
                fmt(r.coefficients.l_ab_re),
                fmt(r.coefficients.l_ab_im),
                fmt(r.coefficients.l_ab_error),
                fmt(r.coefficients.m_re),
                fmt(r.coefficients.m_im),
                fmt(r.coefficients.m_abs),
                fmt(r.coefficients.m_error),
                fmt(r.coefficients.phi),
                fmt(r.negativity_harvested),
                fmt(r.negativity_closed_form),
                fmt(r.negativity_exact_channel),
            ]);
            row
        })
        .collect();
    write_outputs(options, &header, &rows, &records)
}

fn run_compare(config: &RunConfig, options: &RunOptions) -> Result<(), RunError> {
    let model = FieldModel::new(config.field.dimension, config.field.mass).map_err(classify)?;
    let cfg = quadrature_config(config);
    let points = cartesian_points(&config.sweep);
    if options.verbose {
        eprintln!("compare: {} sweep point(s)", points.len());
    }
    let records: Vec<CompareRecord> = points
        .par_iter()
        .map(|point| -> Result<CompareRecord, RunError> {
            let setup = apply_point(config, point)?;
            let run = compute_coefficients(&model, &setup.det_a, &setup.det_b, &cfg)
                .map_err(classify)?;
            let coeff = coefficients_from_run(&run)?;
            let strategy = strategy_for(config.strategy, &coeff);
            let teleported =
                teleported_negativity_2nd(setup.p, &coeff, &strategy).map_err(classify)?;
            Ok(CompareRecord {
                index: point.index,
                sweep: point.values.clone(),
                p: setup.p,
                strategy: config.strategy,
                coefficients: CoefficientFields::new(&run, &coeff),
                negativity_harvested: harvested_negativity_2nd(&coeff),
                negativity_teleported: teleported,
                negativity_transmitted_order2: 0.0,
                transmission_verdict: "second-order zero",
            })
        })
        .collect::<Result<_, _>>()?;

    let p_header: &[&str] = if config.sweep.iter().any(|a| a.parameter == "p") { &[] } else { &["p"] };
    let header = [
        sweep_headers(&config.sweep),
        ["index"]
            .iter()
            .chain(p_header)
            .chain(&[
                "strategy", "l_aa", "l_aa_error", "l_bb", "l_bb_error", "m_abs",
                "m_error", "phi", "negativity_harvested", "negativity_teleported",
                "negativity_transmitted_order2", "transmission_verdict", "l_ab_error",
            ])
            .map(|s| s.to_string())
            .collect(),
    ]
    .concat();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = sweep_cells(&r.sweep);
            row.push(r.index.to_string());
            if !p_header.is_empty() {
                row.push(fmt(r.p));
            }
            row.extend([
                strategy_name(r.strategy).to_string(),
                fmt(r.coefficients.l_aa),
                fmt(r.coefficients.l_aa_error),
                fmt(r.coefficients.l_bb),
                fmt(r.coefficients.l_bb_error),
                fmt(r.coefficients.m_abs),
                fmt(r.coefficients.m_error),
                fmt(r.coefficients.phi),
                fmt(r.negativity_harvested),
                fmt(r.negativity_teleported),
                fmt(r.negativity_transmitted_order2),
                r.transmission_verdict.to_string(),
                fmt(r.coefficients.l_ab_error),
            ]);
            row
        })
        .collect();
    write_outputs(options, &header, &rows, &records)
}

fn run_nogo(config: &RunConfig, options: &RunOptions) -> Result<(), RunError> {
    let section = &config.nogo;
    let model_count = section.models.max(1);
    if options.verbose {
        eprintln!(
            "nogo: {} model(s), field dimension {}, {} coupling scales",
            model_count,
            section.field_dim,
            section.lambdas.len()
        );
    }
    let outcomes: Vec<(NogoModelSummary, Vec<NogoLambdaRecord>)> = (0..model_count)
        .into_par_iter()
        .map(|idx| -> Result<(NogoModelSummary, Vec<NogoLambdaRecord>), RunError> {
            let mut model = if section.models == 0 {
                ToyTransmissionModel::default_toy(section.field_dim).map_err(classify)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(idx as u64));
                ToyTransmissionModel::random(section.field_dim, false, &mut rng)
                    .map_err(classify)?
            };
            match section.couplings {
                CouplingChoice::Full => {}
                CouplingChoice::SenderOnly => model.couplings_b.clear(),
                CouplingChoice::ReceiverOnly => model.couplings_a.clear(),
                CouplingChoice::None => {
                    model.couplings_a.clear();
                    model.couplings_b.clear();
                }
            }
            let grid = TimeGrid::covering(&model, section.grid_steps).map_err(classify)?;
            let (first_order_max, first_order_vacuous) =
                match check_first_order(&model, &grid).map_err(classify)? {
                    FirstOrderCheck::MaxAbs(v) => (Some(v), false),
                    FirstOrderCheck::Vacuous => (None, true),
                };
            let with = second_order_operator(&model, &grid, true).map_err(classify)?;
            let without = second_order_operator(&model, &grid, false).map_err(classify)?;
            let sender_independence = (&with - &without).max_abs_entry();
            let min_correction_eigenvalue = without
                .hermitian_eigenvalues()
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let report = negativity_scaling(&model, &grid, &section.lambdas).map_err(classify)?;
            let lambda_records = report
                .points
                .iter()
                .map(|p| NogoLambdaRecord {
                    model: idx,
                    lambda: p.lambda,
                    negativity: p.negativity,
                    min_pt_eigenvalue: p.min_pt_eigenvalue,
                })
                .collect();
            Ok((
                NogoModelSummary {
                    model: idx,
                    field_dim: section.field_dim,
                    first_order_max,
                    first_order_vacuous,
                    sender_independence,
                    min_correction_eigenvalue,
                    quad_coeff_min_eigenvalue: report.quad_coeff_min_eigenvalue,
                    quad_coeff_negative_part: report.quad_coeff_negative_part,
                    negativity_exponent: report.exponent,
                },
                lambda_records,
            ))
        })
        .collect::<Result<_, _>>()?;

    let mut lambda_records = Vec::new();
    let mut summaries = Vec::new();
    for (summary, records) in outcomes {
        summaries.push(summary);
        lambda_records.extend(records);
    }

    let header: Vec<String> = ["model", "lambda", "negativity", "min_pt_eigenvalue"]
        .into_iter()
        .map(String::from)
        .collect();
    let rows: Vec<Vec<String>> = lambda_records
        .iter()
        .map(|r| {
            vec![
                r.model.to_string(),
                fmt(r.lambda),
                fmt(r.negativity),
                fmt(r.min_pt_eigenvalue),
            ]
        })
        .collect();
    write_outputs(options, &header, &rows, &lambda_records)?;
    let summary_lines: String = summaries
        .iter()
        .map(|s| format!("{}\n", serde_json::to_string(s).expect("serializable")))
        .collect();
    write_text(&options.out_dir.join("nogo_summary.jsonl"), &summary_lines)
}

fn sweep_headers(axes: &[SweepAxis]) -> Vec<String> {
    axes.iter().map(|a| a.parameter.clone()).collect()
}

fn sweep_cells(values: &[(String, f64)]) -> Vec<String> {
    values.iter().map(|(_, v)| fmt(*v)).collect()
}

fn strategy_name(choice: StrategyChoice) -> &'static str {
    match choice {
        StrategyChoice::Standard => "standard",
        StrategyChoice::PhaseCorrected => "phase_corrected",
    }
}

/// Shortest round-trip decimal form; deterministic across runs.
fn fmt(v: f64) -> String {
    v.to_string()
}

fn write_outputs<T: Serialize>(
    options: &RunOptions,
    header: &[String],
    rows: &[Vec<String>],
    records: &[T],
) -> Result<(), RunError> {
    let csv_path = options.out_dir.join("results.csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .map_err(|e| RunError::Io(format!("{}: {e}", csv_path.display())))?;
    writer
        .write_record(header)
        .and_then(|()| rows.iter().try_for_each(|row| writer.write_record(row)))
        .map_err(|e| RunError::Io(format!("{}: {e}", csv_path.display())))?;
    writer
        .flush()
        .map_err(|e| RunError::Io(format!("{}: {e}", csv_path.display())))?;

    let jsonl: String = records
        .iter()
        .map(|r| format!("{}\n", serde_json::to_string(r).expect("serializable record")))
        .collect();
    write_text(&options.out_dir.join("results.jsonl"), &jsonl)
}

fn write_text(path: &Path, content: &str) -> Result<(), RunError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    file.write_all(content.as_bytes())
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}
