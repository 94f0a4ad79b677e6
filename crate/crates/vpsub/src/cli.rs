//! Command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vpsub_core::analysis::{
    beta_from_rate_snr, max_distance, optimize_t, optimize_t_for_noise, pipeline_key_rate, success_curves, LinkSpec,
    ScanSpec, TChoice, TGrid, DEFAULT_RATE_FLOOR,
};
use vpsub_core::fock::{default_cutoff, oracle_for_source};
use vpsub_core::gaussian::apply_channel;
use vpsub_core::montecarlo::{compare, generate_records, AnalyticTargets, ExperimentConfig, RescaleSpec};
use vpsub_core::reconciliation::{channel_for_snr, peg, DegreeProfile, LdpcCode, PairedData, PegOptions, BLOCK_BITS};
use vpsub_core::subtraction::{covariance_subtracted, single_photon_optimal_t};
use vpsub_core::{ChannelSpec, Scheme, SourceSpec};

use crate::error::CliError;
use crate::table::{Cell, Table};
use crate::{alist, config, parallel, records};

/// Published reconciliation operating points `(R, SNR, β)` for rate-0.1 and
/// rate-0.02 codes.
pub const REFERENCE_POINTS: [(f64, f64, f64); 6] = [
    (0.1, 0.1626, 0.9202),
    (0.1, 0.1613, 0.9271),
    (0.1, 0.1600, 0.9340),
    (0.02, 0.0301, 0.9337),
    (0.02, 0.0296, 0.9497),
    (0.02, 0.0293, 0.9594),
];

#[derive(Parser, Debug)]
#[command(name = "vpsub", version, about = "Virtual photon subtraction for coherent-state CV-QKD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format (each subcommand has its own default).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the key rate of one configuration.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Keyrate(KeyrateArgs),
    /// Optimal key rate and splitting ratio versus distance.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fig2(Fig2Args),
    /// Maximal tolerable excess noise versus distance.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fig3(Fig3Args),
    /// Key-rate landscape over the splitting ratio, with 90%/50% bands.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fig4(Fig4Args),
    /// Heralding probability versus splitting ratio.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fig5(Fig5Args),
    /// Key rate under detector inefficiency.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fig6(Fig6Args),
    /// Prepare-and-measure simulation compared with the analytic chain.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Montecarlo(MonteCarloArgs),
    /// Rescale-then-filter check.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Rescale(RescaleArgs),
    /// Closed forms versus the truncated Fock-space oracle.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Oracle(OracleArgs),
    /// Reconciliation benchmark, Gaussian versus postselected data.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Bench(BenchArgs),
    /// Reconciliation efficiency from code rate and SNR.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Beta(BetaArgs),
}

pub const SUBCOMMANDS: [&str; 11] =
    ["keyrate", "fig2", "fig3", "fig4", "fig5", "fig6", "montecarlo", "rescale", "oracle", "bench", "beta"];

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct LinkArgs {
    /// Source variance V (shot-noise units).
    #[arg(long, default_value_t = 20.0)]
    pub v: f64,
    /// Excess noise referred to the channel input.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Reconciliation efficiency.
    #[arg(long, default_value_t = 0.95)]
    pub beta: f64,
    /// Fibre loss in dB/km.
    #[arg(long, default_value_t = 0.2)]
    pub loss: f64,
}

impl LinkArgs {
    fn link(&self) -> LinkSpec {
        LinkSpec { loss_db_per_km: self.loss, epsilon: self.eps, beta: self.beta }
    }
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct SchemeArgs {
    /// Photons to subtract; 0 disables subtraction.
    #[arg(long, default_value_t = 0)]
    pub k: u32,
    /// Use an on-off detector (any click) instead of counting k.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub onoff: bool,
    /// Detector efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub eta_d: f64,
}

impl SchemeArgs {
    fn scheme(&self) -> Scheme {
        match (self.onoff, self.k) {
            (true, _) => Scheme::OnOff,
            (false, 0) => Scheme::None,
            (false, k) => Scheme::KPhoton(k),
        }
    }

    fn source(&self, v: f64, t: f64) -> vpsub_core::Result<SourceSpec> {
        match self.scheme() {
            Scheme::None => SourceSpec::plain(v),
            s => SourceSpec::new(v, t, s)?.with_detector_efficiency(self.eta_d),
        }
    }
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct KeyrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    /// Splitting-ratio transmittance T.
    #[arg(long, default_value_t = 0.8)]
    pub t: f64,
    /// Fibre length in km.
    #[arg(long, default_value_t = 0.0)]
    pub dist: f64,
    /// Channel transmittance; overrides --dist.
    #[arg(long)]
    pub tc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistTable {
    /// One row per scheme and distance.
    Rates,
    /// Maximal distance per scheme.
    Dmax,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 250.0)]
    pub d_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub d_step: f64,
}

impl SweepArgs {
    fn distances(&self) -> Result<Vec<f64>, CliError> {
        if !(self.d_step > 0.0 && self.d_max >= self.d_min && self.d_min >= 0.0) {
            return Err(CliError::Usage("distance sweep needs 0 <= d-min <= d-max and d-step > 0".into()));
        }
        let n = ((self.d_max - self.d_min) / self.d_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.d_min + i as f64 * self.d_step).collect())
    }
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    /// Points of the uniform T grid.
    #[arg(long, default_value_t = 200)]
    pub t_count: usize,
    /// 10x zoom passes around the best grid point.
    #[arg(long, default_value_t = 2)]
    pub refinements: u32,
}

impl GridArgs {
    fn grid(&self) -> vpsub_core::Result<TGrid> {
        TGrid::new(self.t_count, self.refinements)
    }
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fig2Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Photon numbers to subtract (0 = no subtraction).
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub ks: Vec<u32>,
    #[arg(long, value_enum, default_value_t = DistTable::Rates)]
    pub table: DistTable,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fig3Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub ks: Vec<u32>,
    /// Initial upper bracket of the noise search.
    #[arg(long, default_value_t = 0.2)]
    pub eps_hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandscapeTable {
    /// Rate at every (distance, T) grid point.
    Surface,
    /// Optimum and 90%/50% bands per distance.
    Bands,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fig4Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub ks: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "20,60,100,140")]
    pub dists: Vec<f64>,
    #[arg(long, value_enum, default_value_t = LandscapeTable::Bands)]
    pub table: LandscapeTable,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fig5Args {
    #[arg(long, default_value_t = 20.0)]
    pub v: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub ks: Vec<u32>,
    /// Samples T = i/t-count, i = 1..=t-count.
    #[arg(long, default_value_t = 100)]
    pub t_count: usize,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fig6Args {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub onoff: bool,
    #[arg(long, default_value_t = 0.8)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,0.9,0.8,0.7,0.6,0.5")]
    pub etas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = DistTable::Rates)]
    pub table: DistTable,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct MonteCarloArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.8)]
    pub t: f64,
    /// Channel transmittance.
    #[arg(long, default_value_t = 0.1)]
    pub tc: f64,
    /// Samples drawn by Alice.
    #[arg(long, default_value_t = 10_000_000)]
    pub n: u64,
    /// RNG seed; generated and echoed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write every record (`x_a p_a accepted x_b`) to this file.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct RescaleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    /// Transmittance assumed when the data were produced.
    #[arg(long, default_value_t = 0.8)]
    pub t0: f64,
    /// Transmittance the data are reinterpreted at.
    #[arg(long, default_value_t = 0.9)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tc: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct OracleArgs {
    #[arg(long, default_value_t = 2.0)]
    pub v: f64,
    #[arg(long, default_value_t = 0.8)]
    pub t: f64,
    /// Heralded photon count (0 heralds vacuum).
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub onoff: bool,
    #[arg(long, default_value_t = 1.0)]
    pub eta_d: f64,
    /// Fock cutoff; chosen from V when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchData {
    Gaussian,
    NonGaussian,
    Both,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    /// Parity-check matrix in alist format; built by PEG when omitted.
    #[arg(long)]
    pub alist: Option<PathBuf>,
    /// Save the code used to this alist file.
    #[arg(long)]
    pub save_alist: Option<PathBuf>,
    /// Block length of a constructed code.
    #[arg(long, default_value_t = BLOCK_BITS)]
    pub n: usize,
    /// Rate of a constructed code.
    #[arg(long, default_value_t = 0.1)]
    pub rate: f64,
    #[arg(long, default_value_t = 1)]
    pub code_seed: u64,
    #[arg(long, default_value_t = 0.1626)]
    pub snr: f64,
    #[arg(long, default_value_t = 10)]
    pub blocks: usize,
    #[arg(long, value_enum, default_value_t = BenchData::Both)]
    pub data: BenchData,
    /// Source of the postselected data.
    #[arg(long, default_value_t = 20.0)]
    pub v: f64,
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = 0.8)]
    pub t: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: u32,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Clone, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct BetaArgs {
    /// Code rate; with --snr, evaluates one pair instead of the reference list.
    #[arg(long, requires = "snr")]
    pub rate: Option<f64>,
    #[arg(long, requires = "rate")]
    pub snr: Option<f64>,
}

/// Parameter echo: every argument as `(key, value)`, in key order. Feeding
/// these back through `--config` reproduces the run.
pub fn echo<T: Serialize>(args: &T) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        for (k, v) in map {
            let s = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s,
                serde_json::Value::Array(a) => {
                    a.iter().map(|x| x.as_str().map(String::from).unwrap_or_else(|| x.to_string())).collect::<Vec<_>>().join(",")
                }
                other => other.to_string(),
            };
            out.push((k, s));
        }
    }
    out
}

fn auto_seed() -> u64 {
    let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    (t as u64) ^ (u64::from(std::process::id()) << 32)
}

struct Output {
    params: Vec<(String, String)>,
    /// Values computed along the way, reported next to the parameters.
    derived: Vec<(String, String)>,
    table: Table,
    default_format: Format,
}

impl Output {
    fn csv(params: Vec<(String, String)>, table: Table) -> Self {
        Self { params, derived: Vec::new(), table, default_format: Format::Csv }
    }

    fn json(params: Vec<(String, String)>, table: Table) -> Self {
        Self { default_format: Format::Json, ..Self::csv(params, table) }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.derived.push((key.to_string(), value.to_string()));
        self
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Keyrate(_) => "keyrate",
        Command::Fig2(_) => "fig2",
        Command::Fig3(_) => "fig3",
        Command::Fig4(_) => "fig4",
        Command::Fig5(_) => "fig5",
        Command::Fig6(_) => "fig6",
        Command::Montecarlo(_) => "montecarlo",
        Command::Rescale(_) => "rescale",
        Command::Oracle(_) => "oracle",
        Command::Bench(_) => "bench",
        Command::Beta(_) => "beta",
    }
}

/// Comment block: banner, `key=value` parameters, then `key: value`
/// derived values (which `--config` ignores).
fn comments(command: &str, params: &[(String, String)], derived: &[(String, String)]) -> Vec<String> {
    std::iter::once(format!("vpsub {command} {}", env!("CARGO_PKG_VERSION")))
        .chain(params.iter().map(|(k, v)| format!("{k}={v}")))
        .chain(derived.iter().map(|(k, v)| format!("{k}: {v}")))
        .collect()
}

fn write_output(cli: &Cli, out: &Output) -> Result<(), CliError> {
    let command = command_name(&cli.command);
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match cli.format.unwrap_or(out.default_format) {
        Format::Csv => out.table.write_csv(&comments(command, &out.params, &out.derived), &mut sink)?,
        Format::Json => {
            let map = |kv: &[(String, String)]| -> serde_json::Map<String, serde_json::Value> {
                kv.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect()
            };
            let doc = serde_json::json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "params": map(&out.params),
                "derived": map(&out.derived),
                "rows": out.table.to_json(),
            });
            serde_json::to_writer_pretty(&mut sink, &doc).map_err(|e| CliError::Format(e.to_string()))?;
            writeln!(sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

fn scheme_label(s: &SourceSpec) -> String {
    s.scheme.to_string()
}

fn templates(v: f64, ks: &[u32]) -> vpsub_core::Result<Vec<SourceSpec>> {
    ks.iter().map(|&k| if k == 0 { SourceSpec::plain(v) } else { SourceSpec::k_photon(v, 0.5, k) }).collect()
}

fn keyrate(a: &KeyrateArgs) -> Result<Output, CliError> {
    let src = a.scheme.source(a.link.v, a.t)?;
    let ch = match a.tc {
        Some(tc) => ChannelSpec::new(tc, a.link.eps)?,
        None => a.link.link().channel(a.dist)?,
    };
    let r = pipeline_key_rate(&src, &ch, a.link.beta)?;
    let cov = apply_channel(&covariance_subtracted(&src)?.cov, &ch)?;
    let mut t = Table::new(&[
        "scheme", "t_c", "mutual_info", "holevo", "raw_rate", "success_prob", "key_rate", "beta", "v1", "v2", "phi",
    ]);
    t.push(vec![
        scheme_label(&src).into(),
        ch.t_c.into(),
        r.mutual_info.into(),
        r.holevo.into(),
        r.raw_rate.into(),
        r.success_prob.into(),
        r.key_rate.into(),
        r.beta.into(),
        cov.v1.into(),
        cov.v2.into(),
        cov.phi.into(),
    ]);
    Ok(Output::json(echo(a), t))
}

fn fig2(a: &Fig2Args) -> Result<Output, CliError> {
    let link = a.link.link();
    let grid = a.grid.grid()?;
    let schemes = templates(a.link.v, &a.ks)?;
    match a.table {
        DistTable::Rates => {
            let dists = a.sweep.distances()?;
            let cells: Vec<(usize, f64)> = (0..schemes.len()).flat_map(|s| dists.iter().map(move |&d| (s, d))).collect();
            let recs = parallel::try_map(&cells, |&(s, d)| optimize_t(&schemes[s], &link.channel(d)?, link.beta, &grid))?;
            let mut t = Table::new(&["scheme", "distance_km", "t_opt", "key_rate", "success_prob"]);
            for (&(s, d), r) in cells.iter().zip(recs) {
                t.push(vec![scheme_label(&schemes[s]).into(), d.into(), r.t_opt.into(), r.key_rate_opt.into(), r.success_prob_at_opt.into()]);
            }
            Ok(Output::csv(echo(a), t))
        }
        DistTable::Dmax => {
            let d = parallel::try_map(&schemes, |s| max_distance(s, &link, TChoice::Optimal(grid), DEFAULT_RATE_FLOOR, 0.1))?;
            let mut t = Table::new(&["scheme", "d_max_km"]);
            for (s, d) in schemes.iter().zip(d) {
                t.push(vec![scheme_label(s).into(), d.unwrap_or(f64::NAN).into()]);
            }
            Ok(Output::csv(echo(a), t))
        }
    }
}

fn fig3(a: &Fig3Args) -> Result<Output, CliError> {
    let link = a.link.link();
    let grid = a.grid.grid()?;
    let schemes = templates(a.link.v, &a.ks)?;
    let dists = a.sweep.distances()?;
    let cells: Vec<(usize, f64)> = (0..schemes.len()).flat_map(|s| dists.iter().map(move |&d| (s, d))).collect();
    let res = parallel::try_map(&cells, |&(s, d)| {
        let ch = ChannelSpec::from_distance(d, link.loss_db_per_km, 0.0)?;
        optimize_t_for_noise(&schemes[s], &ch, link.beta, a.eps_hi, &grid)
    })?;
    let mut t = Table::new(&["scheme", "distance_km", "t_opt", "eps_max", "no_key"]);
    for (&(s, d), (topt, tol)) in cells.iter().zip(res) {
        t.push(vec![scheme_label(&schemes[s]).into(), d.into(), topt.into(), tol.eps_max.into(), tol.no_key.into()]);
    }
    Ok(Output::csv(echo(a), t))
}

fn fig4(a: &Fig4Args) -> Result<Output, CliError> {
    let scan = ScanSpec {
        distances_km: a.dists.clone(),
        t_grid: a.grid.grid()?,
        schemes: templates(a.link.v, &a.ks)?,
        link: a.link.link(),
        rate_floor: DEFAULT_RATE_FLOOR,
    };
    let rows = parallel::landscape(&scan)?;
    let t = match a.table {
        LandscapeTable::Surface => {
            let mut t = Table::new(&["scheme", "distance_km", "t", "key_rate"]);
            for row in &rows {
                for p in &row.points {
                    t.push(vec![scheme_label(&scan.schemes[p.scheme]).into(), p.distance_km.into(), p.t.into(), p.key_rate.into()]);
                }
            }
            t
        }
        LandscapeTable::Bands => {
            let mut t = Table::new(&[
                "scheme", "distance_km", "t_opt", "key_rate_opt", "band90_lo", "band90_hi", "band50_lo", "band50_hi",
            ]);
            for row in &rows {
                let o = &row.optimum;
                let (a90, b90) = o.band_90.unwrap_or((f64::NAN, f64::NAN));
                let (a50, b50) = o.band_50.unwrap_or((f64::NAN, f64::NAN));
                t.push(vec![
                    scheme_label(&scan.schemes[row.scheme]).into(),
                    o.distance_km.into(),
                    o.t_opt.into(),
                    o.key_rate_opt.into(),
                    a90.into(),
                    b90.into(),
                    a50.into(),
                    b50.into(),
                ]);
            }
            t
        }
    };
    Ok(Output::csv(echo(a), t))
}

fn fig5(a: &Fig5Args) -> Result<Output, CliError> {
    if a.t_count == 0 {
        return Err(CliError::Usage("--t-count must be positive".into()));
    }
    let mut ts: Vec<f64> = (1..=a.t_count).map(|i| i as f64 / a.t_count as f64).collect();
    // Include the single-photon maximiser so the k=1 peak is sampled.
    if let Some(t_star) = single_photon_optimal_t(a.v) {
        if a.ks.contains(&1) && !ts.contains(&t_star) {
            ts.push(t_star);
            ts.sort_by(f64::total_cmp);
        }
    }
    let rows = success_curves(a.v, &a.ks, &ts)?;
    let names: Vec<String> = std::iter::once("t".to_string()).chain(a.ks.iter().map(|k| format!("k{k}"))).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    for r in rows {
        t.push(std::iter::once(Cell::from(r.t)).chain(r.probs.into_iter().map(Cell::from)).collect());
    }
    Ok(Output::csv(echo(a), t))
}

fn fig6(a: &Fig6Args) -> Result<Output, CliError> {
    let link = a.link.link();
    let scheme = if a.onoff { Scheme::OnOff } else { Scheme::KPhoton(a.k) };
    let mut sources = vec![SourceSpec::plain(a.link.v)?];
    for &eta in &a.etas {
        sources.push(SourceSpec::new(a.link.v, a.t, scheme)?.with_detector_efficiency(eta)?);
    }
    match a.table {
        DistTable::Rates => {
            let dists = a.sweep.distances()?;
            let cells: Vec<(usize, f64)> = (0..sources.len()).flat_map(|s| dists.iter().map(move |&d| (s, d))).collect();
            let rates = parallel::try_map(&cells, |&(s, d)| Ok(pipeline_key_rate(&sources[s], &link.channel(d)?, link.beta)?.key_rate))?;
            let mut t = Table::new(&["scheme", "eta_d", "distance_km", "key_rate"]);
            for (&(s, d), r) in cells.iter().zip(rates) {
                t.push(vec![scheme_label(&sources[s]).into(), sources[s].eta_d.into(), d.into(), r.into()]);
            }
            Ok(Output::csv(echo(a), t))
        }
        DistTable::Dmax => {
            let d = parallel::try_map(&sources, |s| max_distance(s, &link, TChoice::Fixed, DEFAULT_RATE_FLOOR, 0.1))?;
            let mut t = Table::new(&["scheme", "eta_d", "d_max_km"]);
            for (s, d) in sources.iter().zip(d) {
                t.push(vec![scheme_label(s).into(), s.eta_d.into(), d.unwrap_or(f64::NAN).into()]);
            }
            Ok(Output::csv(echo(a), t))
        }
    }
}

fn checks_table(checks: &[vpsub_core::montecarlo::Check]) -> Table {
    let mut t = Table::new(&["quantity", "empirical", "target", "std_err", "z", "within_3sigma"]);
    for c in checks {
        t.push(vec![c.name.into(), c.empirical.into(), c.target.into(), c.std_err.into(), c.z.into(), c.within(3.0).into()]);
    }
    t
}

fn montecarlo(a: &mut MonteCarloArgs) -> Result<Output, CliError> {
    let seed = *a.seed.get_or_insert_with(auto_seed);
    let src = a.scheme.source(a.link.v, a.t)?;
    let ch = ChannelSpec::new(a.tc, a.link.eps)?;
    let cfg = ExperimentConfig::new(src, ch, a.n, seed)?;
    let stats = parallel::run_experiment(&cfg)?;
    let targets = AnalyticTargets::for_source(&src, &ch)?;
    let params = echo(a);
    if let Some(path) = &a.export {
        let recs = generate_records(&cfg);
        let c = comments("montecarlo", &params, &[]);
        records::write(&c, &recs, BufWriter::new(File::create(path)?))?;
    }
    Ok(Output::csv(params, checks_table(&compare(&stats, &targets)))
        .with("n-accepted", stats.n_accepted)
        .with("se-inflation", vpsub_core::montecarlo::SE_INFLATION))
}

fn rescale(a: &mut RescaleArgs) -> Result<Output, CliError> {
    let seed = *a.seed.get_or_insert_with(auto_seed);
    let spec = RescaleSpec::new(a.link.v, a.t0, a.eta)?;
    let produced = a.scheme.source(a.link.v, a.t0)?;
    let target = a.scheme.source(spec.v_prime, a.eta)?;
    let ch = ChannelSpec::new(a.tc, a.link.eps)?;
    let cfg = ExperimentConfig::new(produced, ch, a.n, seed)?;
    let stats = parallel::rescale(&cfg, &spec, &target)?;
    let targets = AnalyticTargets::for_source(&target, &ch)?;
    let residual = (a.eta.sqrt() * spec.lambda_prime() * spec.g - a.t0.sqrt() * spec.lambda()).abs();
    Ok(Output::csv(echo(a), checks_table(&compare(&stats, &targets)))
        .with("v-prime", spec.v_prime)
        .with("g", spec.g)
        .with("identity-residual", format!("{residual:e}")))
}

fn oracle(a: &OracleArgs) -> Result<Output, CliError> {
    let scheme = if a.onoff { Scheme::OnOff } else { Scheme::KPhoton(a.k) };
    let src = SourceSpec::new(a.v, a.t, scheme)?.with_detector_efficiency(a.eta_d)?;
    let cutoff = a.cutoff.unwrap_or_else(|| default_cutoff(a.v));
    let closed = covariance_subtracted(&src)?;
    let fock = oracle_for_source(&src, cutoff)?;
    let mut t = Table::new(&["quantity", "closed_form", "oracle", "abs_diff"]);
    for (name, x, y) in [
        ("success_prob", closed.success_prob, fock.probability),
        ("v1", closed.cov.v1, fock.cov.v1),
        ("v2", closed.cov.v2, fock.cov.v2),
        ("phi", closed.cov.phi, fock.cov.phi),
    ] {
        t.push(vec![name.into(), x.into(), y.into(), (x - y).abs().into()]);
    }
    Ok(Output::csv(echo(a), t).with("cutoff-used", cutoff))
}

fn bench_code(a: &BenchArgs) -> Result<LdpcCode, CliError> {
    let code = match &a.alist {
        Some(p) => alist::read(BufReader::new(File::open(p)?))?,
        None => {
            if !(a.rate > 0.0 && a.rate < 1.0) {
                return Err(CliError::Usage("--rate must lie in (0, 1)".into()));
            }
            let m = a.n - (a.rate * a.n as f64).round() as usize;
            peg(a.n, m, &DegreeProfile::rate_tenth(), PegOptions::default(), a.code_seed)?
        }
    };
    if let Some(p) = &a.save_alist {
        alist::write(&code, BufWriter::new(File::create(p)?))?;
    }
    Ok(code)
}

/// Monte Carlo data at the bench SNR; samples are drawn until enough pass
/// the filter.
pub fn non_gaussian_data(src: &SourceSpec, eps: f64, snr: f64, len: usize, seed: u64) -> Result<PairedData, CliError> {
    let ch = channel_for_snr(src, eps, snr)?;
    let p = covariance_subtracted(src)?.success_prob;
    let n = ((len as f64 / p) * 1.1) as u64 + 100_000;
    let cfg = ExperimentConfig::new(*src, ch, n, seed)?;
    Ok(PairedData::from_experiment(&cfg, len)?)
}

fn bench(a: &mut BenchArgs) -> Result<Output, CliError> {
    let seed = *a.seed.get_or_insert_with(auto_seed);
    let code = bench_code(a)?;
    if code.n() % vpsub_core::reconciliation::DIM != 0 {
        return Err(CliError::Usage(format!("code length {} is not a multiple of 8", code.n())));
    }
    let len = a.blocks * code.n();
    let mut runs = Vec::new();
    if matches!(a.data, BenchData::Gaussian | BenchData::Both) {
        runs.push(PairedData::gaussian(a.snr, len, seed)?);
    }
    if matches!(a.data, BenchData::NonGaussian | BenchData::Both) {
        let src = if a.k == 0 { SourceSpec::plain(a.v)? } else { SourceSpec::k_photon(a.v, a.t, a.k)? };
        runs.push(non_gaussian_data(&src, a.eps, a.snr, len, seed)?);
    }
    let mut t = Table::new(&["R", "SNR", "beta", "type", "S/T", "AIN"]);
    for data in &runs {
        let r = parallel::bench(data, &code, a.snr, a.blocks, seed, a.max_iter)?;
        t.push(vec![
            r.code_rate.into(),
            r.snr.into(),
            r.beta.into(),
            r.data_type.to_string().into(),
            format!("{}/{}", r.blocks_success, r.blocks_total).into(),
            r.avg_iterations_on_success.unwrap_or(f64::NAN).into(),
        ]);
    }
    Ok(Output::csv(echo(a), t).with("code-n", code.n()).with("code-m", code.m()))
}

fn beta(a: &BetaArgs) -> Result<Output, CliError> {
    let mut t = Table::new(&["rate", "snr", "beta", "reference_beta"]);
    match (a.rate, a.snr) {
        (Some(r), Some(s)) => t.push(vec![r.into(), s.into(), beta_from_rate_snr(r, s)?.into(), f64::NAN.into()]),
        _ => {
            for (r, s, b) in REFERENCE_POINTS {
                t.push(vec![r.into(), s.into(), beta_from_rate_snr(r, s)?.into(), b.into()]);
            }
        }
    }
    Ok(Output::json(echo(a), t))
}

/// Runs a parsed command line.
pub fn run(mut cli: Cli) -> Result<(), CliError> {
    let out = match &mut cli.command {
        Command::Keyrate(a) => keyrate(a)?,
        Command::Fig2(a) => fig2(a)?,
        Command::Fig3(a) => fig3(a)?,
        Command::Fig4(a) => fig4(a)?,
        Command::Fig5(a) => fig5(a)?,
        Command::Fig6(a) => fig6(a)?,
        Command::Montecarlo(a) => montecarlo(a)?,
        Command::Rescale(a) => rescale(a)?,
        Command::Oracle(a) => oracle(a)?,
        Command::Bench(a) => bench(a)?,
        Command::Beta(a) => beta(a)?,
    };
    write_output(&cli, &out)
}

/// Full entry point: config expansion, parsing, execution. Returns the
/// process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let args = match config::expand_args(args, &SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
