//! Parameter sweeps, report tables and their CSV/JSON encodings.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridio;
use crate::noise::{
    noise_covariance, variance_numeric, NoiseCovariance, NoiseModel, SpectrumComponents,
    VarianceBreakdown,
};
use crate::oracle::PsdEstimate;
use crate::params::{derive, DerivedParams, GainPolicy, SystemConfig};
use crate::phasespace::{
    default_grid, fidelity, min_wigner, transfer_wigner, wigner_state, Fidelity, GainHandling,
    GridSpec, PhaseSpaceGrid, StateSpec,
};
use crate::transfer::{gains_analytic, gains_numeric, Gains, ResponseEval, ResponseModel};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// C/n_th, varied through g_om at fixed Γ, κ, Ω and T.
    CooperativityRatio,
    /// G/C at fixed C.
    GainRatio,
    /// Detection efficiency η.
    Efficiency,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::CooperativityRatio => "c_over_nth",
            SweepAxis::GainRatio => "g_over_c",
            SweepAxis::Efficiency => "eta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGrid {
    Values(Vec<f64>),
    /// `points` values log-spaced from `start` to `stop` inclusive.
    Log {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            SweepGrid::Values(ref v) => v.clone(),
            SweepGrid::Log {
                start,
                stop,
                points,
            } => match points {
                0 => Vec::new(),
                1 => vec![start],
                n => {
                    let (a, b) = (start.log10(), stop.log10());
                    (0..n)
                        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
                        .collect()
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Gains,
    Variances,
    Fidelity,
}

fn all_tables() -> Vec<Table> {
    vec![Table::Gains, Table::Variances, Table::Fidelity]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: SweepGrid,
    #[serde(default)]
    pub states: Vec<StateSpec>,
    #[serde(default = "all_tables")]
    pub outputs: Vec<Table>,
    #[serde(default)]
    pub gain_handling: GainHandling,
    /// Phase-space grid; chosen from the states when absent.
    #[serde(default)]
    pub phase_grid: Option<GridSpec>,
    /// Keep the transferred Wigner grids for export.
    #[serde(default)]
    pub export_wigner: bool,
    /// C/n_th applied to the configuration before sweeping another axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooperativity_ratio: Option<f64>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, grid: SweepGrid) -> Self {
        SweepSpec {
            axis,
            grid,
            states: Vec::new(),
            outputs: all_tables(),
            gain_handling: GainHandling::Scaled,
            phase_grid: None,
            export_wigner: false,
            cooperativity_ratio: None,
        }
    }

    /// Gains over G/C ∈ [10⁻², 10³], ten points per decade.
    pub fn fig2() -> Self {
        let mut s = Self::new(
            SweepAxis::GainRatio,
            SweepGrid::Log {
                start: 1e-2,
                stop: 1e3,
                points: 51,
            },
        );
        s.outputs = vec![Table::Gains];
        s
    }

    /// Variance budget over C/n_th ∈ [10⁻², 10²], eight points per decade.
    pub fn fig3a() -> Self {
        let mut s = Self::new(SweepAxis::CooperativityRatio, Self::ratio_grid());
        s.outputs = vec![Table::Gains, Table::Variances];
        s
    }

    /// Fidelities of the coherent (α = 1), Fock-1 and cat (α = 2) states over C/n_th.
    pub fn fig3b() -> Self {
        let mut s = Self::new(SweepAxis::CooperativityRatio, Self::ratio_grid());
        s.states = shipped_states();
        s
    }

    /// Coherent-state fidelity against η at C/n_th = 10.
    pub fn fig3b_inset() -> Self {
        let values = vec![
            0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
        ];
        let mut s = Self::new(SweepAxis::Efficiency, SweepGrid::Values(values));
        s.states = vec![StateSpec::coherent(Complex64::new(1.0, 0.0))];
        s.cooperativity_ratio = Some(10.0);
        s
    }

    pub fn recipe(name: &str) -> Option<Self> {
        match name {
            "fig2" => Some(Self::fig2()),
            "fig3a" => Some(Self::fig3a()),
            "fig3b" => Some(Self::fig3b()),
            "fig3b-inset" | "fig3b_inset" => Some(Self::fig3b_inset()),
            _ => None,
        }
    }

    fn ratio_grid() -> SweepGrid {
        SweepGrid::Log {
            start: 1e-2,
            stop: 1e2,
            points: 33,
        }
    }

    pub fn validate(&self) -> Result<Vec<f64>> {
        let values = self.grid.values();
        if values.is_empty() {
            return Err(Error::validation("grid", "empty grid"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "grid",
                "values must be strictly increasing",
            ));
        }
        let bad = match self.axis {
            SweepAxis::Efficiency => values.iter().find(|&&v| !(v > 0.0 && v <= 1.0)),
            _ => values.iter().find(|&&v| !(v.is_finite() && v > 0.0)),
        };
        if let Some(r) = self.cooperativity_ratio {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation(
                    "cooperativity_ratio",
                    format!("must be positive, got {r}"),
                ));
            }
        }
        if let Some(v) = bad {
            return Err(Error::validation(
                "grid",
                format!("{v} is outside the range of {}", self.axis.column()),
            ));
        }
        Ok(values)
    }

    pub fn wants(&self, table: Table) -> bool {
        self.outputs.contains(&table)
    }
}

pub fn shipped_states() -> Vec<StateSpec> {
    vec![
        StateSpec::coherent(Complex64::new(1.0, 0.0)),
        StateSpec::fock1(),
        StateSpec::cat(Complex64::new(2.0, 0.0)),
    ]
}

/// Configuration and derived parameters for one sweep value.
pub fn resolve(
    config: &SystemConfig,
    axis: SweepAxis,
    value: f64,
) -> Result<(SystemConfig, DerivedParams)> {
    let cfg = match axis {
        SweepAxis::CooperativityRatio => config.with_cooperativity_ratio(value),
        SweepAxis::GainRatio => {
            let c = derive(config)?.cooperativity;
            SystemConfig {
                gain_policy: GainPolicy::Explicit(value * c),
                ..config.clone()
            }
        }
        SweepAxis::Efficiency => SystemConfig {
            eta: value,
            ..config.clone()
        },
    };
    let params = derive(&cfg)?;
    Ok((cfg, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainValues {
    pub g_x: f64,
    pub g_y: f64,
    pub overall: f64,
    pub squeeze: f64,
}

impl From<&Gains> for GainValues {
    fn from(g: &Gains) -> Self {
        GainValues {
            g_x: g.g_x,
            g_y: g.g_y,
            overall: g.overall,
            squeeze: g.squeeze,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResult {
    pub label: String,
    pub fidelity: Option<Fidelity>,
    /// Minimum of the transferred Wigner function and its location.
    pub min_w: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub value: f64,
    pub status: RowStatus,
    pub error: Option<String>,
    pub cooperativity: Option<f64>,
    pub n_th: Option<f64>,
    pub feedback_gain: Option<f64>,
    pub eta: Option<f64>,
    pub gains: Option<GainValues>,
    pub gains_analytic: Option<GainValues>,
    pub variances: Option<VarianceBreakdown>,
    pub covariance: Option<NoiseCovariance>,
    pub states: Vec<StateResult>,
    pub config_hash: Option<String>,
    pub seed: u64,
    pub version: String,
    #[serde(skip)]
    pub wigner: Vec<Option<PhaseSpaceGrid>>,
}

impl ReportRow {
    fn empty(index: usize, value: f64, seed: u64) -> Self {
        ReportRow {
            index,
            value,
            status: RowStatus::Ok,
            error: None,
            cooperativity: None,
            n_th: None,
            feedback_gain: None,
            eta: None,
            gains: None,
            gains_analytic: None,
            variances: None,
            covariance: None,
            states: Vec::new(),
            config_hash: None,
            seed,
            version: CODE_VERSION.to_string(),
            wigner: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    pub fn state(&self, label: &str) -> Option<&StateResult> {
        self.states.iter().find(|s| s.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub generator: String,
    pub config: SystemConfig,
    pub config_hash: String,
    pub spec: SweepSpec,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    /// Column labels for per-state results, made unique by position when needed.
    pub fn state_labels(&self) -> Vec<String> {
        state_labels(&self.spec.states)
    }
}

fn state_labels(states: &[StateSpec]) -> Vec<String> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dup = states.iter().filter(|t| t.label() == s.label()).count() > 1;
            if dup {
                format!("{}{}", s.label(), i)
            } else {
                s.label().to_string()
            }
        })
        .collect()
}

struct Targets {
    grid: GridSpec,
    labels: Vec<String>,
    targets: Vec<PhaseSpaceGrid>,
}

fn evaluate_row(
    config: &SystemConfig,
    spec: &SweepSpec,
    targets: Option<&Targets>,
    row: &mut ReportRow,
) -> Result<()> {
    let (cfg, p) = resolve(config, spec.axis, row.value)?;
    row.config_hash = Some(cfg.hash_hex());
    row.cooperativity = Some(p.cooperativity);
    row.n_th = Some(p.n_th);
    row.feedback_gain = Some(p.feedback_gain);
    row.eta = Some(p.eta);
    row.gains_analytic = Some((&gains_analytic(&p)).into());
    let gains = gains_numeric(&p)?;
    row.gains = Some((&gains).into());
    if !(spec.wants(Table::Variances) || spec.wants(Table::Fidelity) && targets.is_some()) {
        return Ok(());
    }
    let v = variance_numeric(&p, &gains)?;
    row.variances = Some(v);
    let cov = noise_covariance(&v)?;
    row.covariance = Some(cov);
    let Some(t) = targets else { return Ok(()) };
    for ((state, label), target) in spec.states.iter().zip(&t.labels).zip(&t.targets) {
        let out = transfer_wigner(state, &cov, &gains, &t.grid, spec.gain_handling)?;
        let f = fidelity(target, &out)?;
        let (w, q, pp) = min_wigner(&out);
        row.states.push(StateResult {
            label: label.clone(),
            fidelity: Some(f),
            min_w: Some([w, q, pp]),
        });
        if spec.export_wigner {
            row.wigner.push(Some(out));
        }
    }
    Ok(())
}

/// Evaluates every grid value; a failing value yields a row with status
/// `failed` and the error message, and the sweep continues.
pub fn run_sweep(
    config: &SystemConfig,
    spec: &SweepSpec,
    seed: u64,
    threads: Option<usize>,
) -> Result<Report> {
    let values = spec.validate()?;
    let pinned = match spec.cooperativity_ratio {
        Some(r) if spec.axis != SweepAxis::CooperativityRatio => config.with_cooperativity_ratio(r),
        _ => config.clone(),
    };
    let config = &pinned;
    derive(config)?;
    let targets = if spec.wants(Table::Fidelity) && !spec.states.is_empty() {
        let grid = spec
            .phase_grid
            .unwrap_or_else(|| default_grid(&spec.states));
        let targets = spec
            .states
            .iter()
            .map(|s| wigner_state(s, &grid))
            .collect::<Result<Vec<_>>>()?;
        Some(Targets {
            grid,
            labels: state_labels(&spec.states),
            targets,
        })
    } else {
        None
    };
    let rows = crate::pool::install(threads, || {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut row = ReportRow::empty(i, v, seed);
                if let Err(e) = evaluate_row(config, spec, targets.as_ref(), &mut row) {
                    log::warn!("{} = {v}: {e}", spec.axis.column());
                    row.status = RowStatus::Failed;
                    row.error = Some(e.to_string());
                }
                row
            })
            .collect::<Vec<_>>()
    })?;
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        generator: format!("fbtransfer {CODE_VERSION}"),
        config: config.clone(),
        config_hash: config.hash_hex(),
        spec: spec.clone(),
        seed,
        rows,
    })
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with one row per grid value. Columns: the axis value, then the gain
/// columns `g_x, g_y, overall, squeeze, g_x_analytic, g_y_analytic`, the
/// variance and covariance columns, `fidelity_<state>, min_w_<state>` per
/// state, and finally `status, error, cooperativity, n_th, feedback_gain,
/// eta, config_hash, seed, version`.
pub fn report_csv(report: &Report) -> Result<String> {
    let spec = &report.spec;
    let labels = report.state_labels();
    let with_states = spec.wants(Table::Fidelity) && !spec.states.is_empty();
    let mut header: Vec<String> = vec![spec.axis.column().to_string()];
    if spec.wants(Table::Gains) {
        header.extend(
            [
                "g_x",
                "g_y",
                "overall",
                "squeeze",
                "g_x_analytic",
                "g_y_analytic",
            ]
            .map(String::from),
        );
    }
    if spec.wants(Table::Variances) {
        header.extend(
            [
                "v_x_trans",
                "v_q_mech",
                "v_q_mismatch",
                "v_q_eta",
                "v_y_trans",
                "v_p_mech",
                "v_p_eta",
                "v_pq",
                "v_q_total",
                "v_p_total",
                "v_qp_total",
                "cov_v11",
                "cov_v12",
                "cov_v22",
            ]
            .map(String::from),
        );
    }
    if with_states {
        for l in &labels {
            header.push(format!("fidelity_{l}"));
            header.push(format!("min_w_{l}"));
        }
    }
    header.extend(
        [
            "status",
            "error",
            "cooperativity",
            "n_th",
            "feedback_gain",
            "eta",
            "config_hash",
            "seed",
            "version",
        ]
        .map(String::from),
    );

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.value.to_string()];
        if spec.wants(Table::Gains) {
            let g = r.gains;
            let a = r.gains_analytic;
            rec.extend([
                num(g.map(|g| g.g_x)),
                num(g.map(|g| g.g_y)),
                num(g.map(|g| g.overall)),
                num(g.map(|g| g.squeeze)),
                num(a.map(|a| a.g_x)),
                num(a.map(|a| a.g_y)),
            ]);
        }
        if spec.wants(Table::Variances) {
            let v = r.variances;
            let c = r.covariance;
            let fields: [fn(&VarianceBreakdown) -> f64; 11] = [
                |v| v.v_x_trans,
                |v| v.v_q_mech,
                |v| v.v_q_mismatch,
                |v| v.v_q_eta,
                |v| v.v_y_trans,
                |v| v.v_p_mech,
                |v| v.v_p_eta,
                |v| v.v_pq,
                |v| v.v_q_total,
                |v| v.v_p_total,
                |v| v.v_qp_total,
            ];
            rec.extend(fields.iter().map(|f| num(v.as_ref().map(f))));
            rec.extend([
                num(c.map(|c| c.v11)),
                num(c.map(|c| c.v12)),
                num(c.map(|c| c.v22)),
            ]);
        }
        if with_states {
            for l in &labels {
                let s = r.state(l);
                rec.push(num(s.and_then(|s| s.fidelity).map(|f| f.value)));
                rec.push(num(s.and_then(|s| s.min_w).map(|m| m[0])));
            }
        }
        rec.extend([
            match r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed => "failed".to_string(),
            },
            r.error.clone().unwrap_or_default(),
            num(r.cooperativity),
            num(r.n_th),
            num(r.feedback_gain),
            num(r.eta),
            r.config_hash.clone().unwrap_or_default(),
            r.seed.to_string(),
            r.version.clone(),
        ]);
        w.write_record(&rec)?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Contract(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Writes `<dir>/<name>.csv` or `<dir>/<name>.json`, plus the kept Wigner
/// grids under `<dir>/<name>_wigner/`. Returns the written paths.
pub fn emit(report: &Report, dir: &Path, name: &str, format: Format) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::validation("grid", "empty grid"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let (path, text) = match format {
        Format::Csv => (dir.join(format!("{name}.csv")), report_csv(report)?),
        Format::Json => (
            dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(report)? + "\n",
        ),
    };
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    let labels = report.state_labels();
    let wdir = dir.join(format!("{name}_wigner"));
    for row in &report.rows {
        for (label, grid) in labels.iter().zip(&row.wigner) {
            if let Some(g) = grid {
                std::fs::create_dir_all(&wdir).map_err(|e| Error::io(&wdir, e))?;
                let (bin, json) =
                    gridio::write_grid(&wdir.join(format!("row{:03}_{label}", row.index)), g)?;
                written.extend([bin, json]);
            }
        }
    }
    Ok(written)
}

/// `points` angular frequencies spaced evenly over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// φ, f, χ and u on `omegas`, with g_Y from quadrature.
pub fn response_table(params: &DerivedParams, omegas: &[f64]) -> Result<Vec<ResponseEval>> {
    let g_y = gains_numeric(params)?.g_y;
    let model = ResponseModel::new(params);
    omegas.iter().map(|&w| model.evaluate(w, g_y)).collect()
}

pub fn response_csv(rows: &[ResponseEval]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "omega", "phi_re", "phi_im", "f_re", "f_im", "chi_re", "chi_im", "u_re", "u_im",
    ])?;
    for r in rows {
        let c = [r.phi, r.f, r.chi, r.u];
        let mut rec = vec![r.omega.to_string()];
        rec.extend(c.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]));
        w.write_record(&rec)?;
    }
    into_string(w)
}

pub fn psd_table(
    params: &DerivedParams,
    gains: &Gains,
    omegas: &[f64],
) -> Result<Vec<SpectrumComponents>> {
    let model = NoiseModel::new(params, gains)?;
    omegas.iter().map(|&w| model.psd_components(w)).collect()
}

pub fn psd_csv(rows: &[SpectrumComponents]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "omega",
        "qq_signal",
        "qq_mismatch",
        "qq_eta",
        "qq_opt_noise",
        "qq_mech",
        "qq_total",
        "pp_signal",
        "pp_eta",
        "pp_opt_noise",
        "pp_mech",
        "pp_total",
        "pq_cross",
        "pq_total",
    ])?;
    for r in rows {
        let vals = [
            r.omega,
            r.qq_signal,
            r.qq_mismatch,
            r.qq_eta,
            r.qq_opt_noise,
            r.qq_mech,
            r.qq_total,
            r.pp_signal,
            r.pp_eta,
            r.pp_opt_noise,
            r.pp_mech,
            r.pp_total,
            r.pq_cross,
            r.pq_total,
        ];
        w.write_record(vals.map(|v| v.to_string()))?;
    }
    into_string(w)
}

/// Monte Carlo spectrum with standard errors. When `analytic` is given, a
/// final column holds the aliased closed-form S̄_QQ at each bin.
pub fn psd_estimate_csv(psd: &PsdEstimate, analytic: Option<&[f64]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["omega", "s_qq", "stderr_qq", "s_pp", "stderr_pp"];
    if analytic.is_some() {
        header.push("s_qq_analytic");
    }
    w.write_record(&header)?;
    for k in 0..psd.omega.len() {
        let mut rec = vec![
            psd.omega[k].to_string(),
            psd.s_qq[k].to_string(),
            psd.stderr_qq[k].to_string(),
            psd.s_pp[k].to_string(),
            psd.stderr_pp[k].to_string(),
        ];
        if let Some(a) = analytic {
            rec.push(a[k].to_string());
        }
        w.write_record(&rec)?;
    }
    into_string(w)
}

/// CSV of flat records, with a header from the field names.
pub fn records_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    into_string(w)
}

/// Image count for [`NoiseModel::aliased_total_qq`] at sampling interval
/// `dt`: enough to reach well past every folded copy of the resonance.
pub fn aliased_terms(params: &DerivedParams, dt: f64) -> usize {
    let images = params.omega_m.max(params.gamma_f) * dt / (2.0 * std::f64::consts::PI);
    ((30.0 * images).ceil() as usize).max(40)
}

/// Aliased closed-form S̄_QQ at every bin of `psd`.
pub fn psd_reference(params: &DerivedParams, gains: &Gains, psd: &PsdEstimate) -> Result<Vec<f64>> {
    let model = NoiseModel::new(params, gains)?;
    let terms = aliased_terms(params, psd.dt);
    psd.omega
        .par_iter()
        .map(|&w| model.aliased_total_qq(w, psd.dt, terms))
        .collect()
}

/// Single-line summary of a report, for logs.
pub fn summary(report: &Report) -> String {
    format!(
        "{} rows over {}, {} failed",
        report.rows.len(),
        report.spec.axis.column(),
        report.failed_rows()
    )
}
