//! Ensemble runs over random instances and the summary statistics used to
//! compare solver variants.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{self, SolveConfig, SolveReport};
use crate::error::{Error, Result};
use crate::heuristic::{self, HeuristicConfig, HeuristicResult, HeuristicStatus};
use crate::model::{generate_instance, CandidateSolution, PresetMapping, ProblemInstance, TolPreset};

/// Shift applied to run times before taking geometric means.
pub const TIME_SHIFT: f64 = 10.0;
/// Shift applied to node counts before taking geometric means.
pub const NODE_SHIFT: f64 = 100.0;

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("mean of non-finite or negative value {v}")));
    }
    Ok(())
}

/// `(∏(vᵢ + shift))^{1/n} − shift`, evaluated through logarithms.
pub fn shifted_geomean(values: &[f64], shift: f64) -> Result<f64> {
    check_values(values)?;
    if !(shift >= 0.0) {
        return Err(Error::InvalidConfig(format!("shift must be nonnegative, got {shift}")));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(values[0]);
    }
    let mean_log = values.iter().map(|v| (v + shift).ln()).sum::<f64>() / values.len() as f64;
    Ok(mean_log.exp() - shift)
}

pub fn geomean(values: &[f64]) -> Result<f64> {
    shifted_geomean(values, 0.0)
}

pub fn arithmetic_mean(values: &[f64]) -> Result<f64> {
    check_values(values)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Default,
    Modulus,
    DefaultHeur,
    ModulusHeur,
    Heur,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Default, Variant::Modulus, Variant::DefaultHeur, Variant::ModulusHeur, Variant::Heur];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::Modulus => "modulus",
            Variant::DefaultHeur => "default+heur",
            Variant::ModulusHeur => "modulus+heur",
            Variant::Heur => "heur",
        }
    }

    pub fn is_exact(self) -> bool {
        self != Variant::Heur
    }

    pub fn uses_heuristic(self) -> bool {
        matches!(self, Variant::DefaultHeur | Variant::ModulusHeur | Variant::Heur)
    }

    pub fn modulus_handler(self) -> bool {
        matches!(self, Variant::Modulus | Variant::ModulusHeur)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Variant::Default),
            "modulus" => Ok(Variant::Modulus),
            "default+heur" => Ok(Variant::DefaultHeur),
            "modulus+heur" => Ok(Variant::ModulusHeur),
            "heur" | "heuristic" => Ok(Variant::Heur),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

/// Result of one variant on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub preset: String,
    pub seed: u64,
    pub variant: String,
    pub nodes: Option<usize>,
    pub time_s: Option<f64>,
    pub status: String,
    pub opt_card: Option<usize>,
    pub heur_card: Option<usize>,
    pub heur_time_s: Option<f64>,
}

impl RunRecord {
    pub fn is_optimal(&self) -> bool {
        self.status == bnb::SolveStatus::Optimal.label()
    }

    pub fn variant(&self) -> Result<Variant> {
        self.variant.parse()
    }

    /// Copy with wall-clock columns blanked, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        Self { time_s: None, heur_time_s: None, ..self.clone() }
    }
}

/// Instance ensemble: every combination of sizes, user counts and presets,
/// `seeds` instances each.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub antennas: Vec<usize>,
    pub users: Vec<usize>,
    pub presets: Vec<TolPreset>,
    pub seeds: usize,
}

impl Grid {
    /// Laptop-sized ensemble: N up to 32, three seeds per cell.
    pub fn desk() -> Self {
        Self { antennas: vec![16, 24, 32], users: vec![2, 3, 4], presets: TolPreset::ALL.to_vec(), seeds: 3 }
    }

    /// The full published ensemble; the hardest cells take on the order of an
    /// hour each.
    pub fn full() -> Self {
        Self { antennas: vec![16, 32, 48, 64], users: vec![2, 3, 4], presets: TolPreset::ALL.to_vec(), seeds: 10 }
    }

    pub fn cells(&self) -> usize {
        self.antennas.len() * self.users.len() * self.presets.len() * self.seeds
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Grid::desk()),
            "full" => Ok(Grid::full()),
            other => Err(Error::InvalidConfig(format!("unknown grid '{other}' (expected desk or full)"))),
        }
    }
}

/// One generated instance of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub n: usize,
    pub k: usize,
    pub preset: TolPreset,
    /// Position within its cell.
    pub index: usize,
    /// Seed actually used to draw the instance.
    pub seed: u64,
}

impl InstanceSpec {
    pub fn id(&self) -> String {
        format!("N{}-K{}-{}-{}", self.n, self.k, self.preset.label(), self.index)
    }

    pub fn generate(&self, mapping: PresetMapping) -> Result<ProblemInstance> {
        generate_instance(self.n, self.k, self.preset.tol(mapping), self.seed)
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of instance `index` in cell `(n, k, preset)` of a suite.
pub fn instance_seed(master: u64, n: usize, k: usize, preset: TolPreset, index: usize) -> u64 {
    [n as u64, k as u64, preset as u64, index as u64].iter().fold(mix(master), |h, &v| mix(h ^ v))
}

impl Grid {
    pub fn instances(&self, master: u64) -> Vec<InstanceSpec> {
        let mut out = Vec::with_capacity(self.cells());
        for &n in &self.antennas {
            for &k in &self.users {
                for &preset in &self.presets {
                    for index in 0..self.seeds {
                        out.push(InstanceSpec { n, k, preset, index, seed: instance_seed(master, n, k, preset, index) });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub grid: Grid,
    pub variants: Vec<Variant>,
    pub master_seed: u64,
    pub time_limit_s: f64,
    /// Caps the exact solver's node count; unlike the time limit this keeps
    /// interrupted runs reproducible.
    pub node_limit: Option<usize>,
    pub eps: f64,
    pub mapping: PresetMapping,
    pub heuristic: HeuristicConfig,
    /// Instances solved concurrently.
    pub workers: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            grid: Grid::desk(),
            variants: Variant::ALL.to_vec(),
            master_seed: 0,
            time_limit_s: 300.0,
            node_limit: None,
            eps: crate::model::DEFAULT_EPS,
            mapping: PresetMapping::default(),
            heuristic: HeuristicConfig { parallel_restarts: false, ..HeuristicConfig::default() },
            workers: 1,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.antennas.is_empty() || g.users.is_empty() || g.presets.is_empty() || g.seeds == 0 {
            return Err(Error::InvalidConfig("grid has no instances".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("no variants selected".into()));
        }
        if !(self.time_limit_s > 0.0) {
            return Err(Error::InvalidConfig(format!("time limit must be positive, got {}", self.time_limit_s)));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("at least one worker is required".into()));
        }
        Ok(())
    }
}

/// Runs a single variant on one instance. Errors are reported in the
/// record's status.
pub fn run_variant(spec: &InstanceSpec, variant: Variant, cfg: &SuiteConfig) -> RunRecord {
    let start = Instant::now();
    let mut rec = RunRecord {
        instance: spec.id(),
        n: spec.n,
        k: spec.k,
        preset: spec.preset.label().to_string(),
        seed: spec.seed,
        variant: variant.label().to_string(),
        nodes: None,
        time_s: None,
        status: String::new(),
        opt_card: None,
        heur_card: None,
        heur_time_s: None,
    };
    match execute(spec, variant, cfg, &mut rec) {
        Ok(()) => {}
        Err(e) => {
            warn!("{} {}: {e}", rec.instance, rec.variant);
            rec.status = format!("error: {e}");
        }
    }
    rec.time_s = Some(start.elapsed().as_secs_f64());
    rec
}

fn execute(spec: &InstanceSpec, variant: Variant, cfg: &SuiteConfig, rec: &mut RunRecord) -> Result<()> {
    let inst = spec.generate(cfg.mapping)?;
    let mut warm = None;
    if variant.uses_heuristic() {
        let hcfg = HeuristicConfig { seed: spec.seed, ..cfg.heuristic.clone() };
        let h: HeuristicResult = heuristic::solve_heuristic(&inst, &hcfg)?;
        rec.heur_time_s = Some(h.time_s);
        if h.status == HeuristicStatus::Feasible {
            rec.heur_card = Some(h.cardinality);
            warm = Some(CandidateSolution::from_complex(&h.x.x));
        }
        if !variant.is_exact() {
            rec.status = match h.status {
                HeuristicStatus::Feasible => "feasible",
                HeuristicStatus::Infeasible => "infeasible",
            }
            .to_string();
            return Ok(());
        }
    }
    let scfg = SolveConfig {
        time_limit_s: cfg.time_limit_s,
        node_limit: cfg.node_limit,
        eps: cfg.eps,
        modulus_handler: variant.modulus_handler(),
        initial_solution: warm,
        ..SolveConfig::default()
    };
    let report: SolveReport = bnb::solve_exact(&inst, &scfg)?;
    rec.nodes = Some(report.nodes);
    rec.status = report.status.label().to_string();
    rec.opt_card = report.cardinality;
    Ok(())
}

/// Runs every variant on every instance of the grid. Records come back in
/// grid order, variants in the order given, however many workers run.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let jobs: Vec<(InstanceSpec, Variant)> = cfg
        .grid
        .instances(cfg.master_seed)
        .into_iter()
        .flat_map(|s| cfg.variants.iter().map(move |&v| (s.clone(), v)))
        .collect();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|(spec, v)| {
                let rec = run_variant(spec, *v, cfg);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                info!(
                    "[{k}/{total}] {} {}: {} nodes={:?} t={:.2}s",
                    rec.instance,
                    rec.variant,
                    rec.status,
                    rec.nodes,
                    rec.time_s.unwrap_or(0.0)
                );
                rec
            })
            .collect()
    });
    Ok(records)
}

/// Writes the records as CSV; with `timings` false the wall-clock columns
/// are left empty so that repeated runs compare byte for byte.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W, timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        if timings {
            w.serialize(r)?;
        } else {
            w.serialize(r.without_timings())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Means of one variant's runs. Node statistics cover exact runs only.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub optimal: usize,
    pub time: Means,
    pub nodes: Option<Means>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Means {
    pub geometric: f64,
    pub shifted: f64,
    pub arithmetic: f64,
}

impl Means {
    pub fn of(values: &[f64], shift: f64) -> Result<Self> {
        Ok(Self {
            geometric: geomean(values)?,
            shifted: shifted_geomean(values, shift)?,
            arithmetic: arithmetic_mean(values)?,
        })
    }
}

/// Per-variant means in first-appearance order. Runs without a recorded time
/// are skipped for the time means.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<VariantSummary>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.variant == v).collect();
            let times: Vec<f64> = runs.iter().filter_map(|r| r.time_s).collect();
            let nodes: Vec<f64> = runs.iter().filter_map(|r| r.nodes.map(|n| n as f64)).collect();
            Ok(VariantSummary {
                variant: v.to_string(),
                runs: runs.len(),
                optimal: runs.iter().filter(|r| r.is_optimal()).count(),
                time: if times.is_empty() {
                    Means { geometric: f64::NAN, shifted: f64::NAN, arithmetic: f64::NAN }
                } else {
                    Means::of(&times, TIME_SHIFT)?
                },
                nodes: if nodes.is_empty() { None } else { Some(Means::of(&nodes, NODE_SHIFT)?) },
            })
        })
        .collect()
}

/// Table of [`summarize`] output.
pub struct SummaryTable<'a>(pub &'a [VariantSummary]);

impl fmt::Display for SummaryTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>5} {:>7}  {:>10} {:>10} {:>10}  {:>10} {:>10} {:>10}",
            "variant", "runs", "optimal", "t geo", "t sgeo", "t arith", "n geo", "n sgeo", "n arith"
        )?;
        for s in self.0 {
            write!(
                f,
                "{:<14} {:>5} {:>7}  {:>10.2} {:>10.2} {:>10.2}",
                s.variant, s.runs, s.optimal, s.time.geometric, s.time.shifted, s.time.arithmetic
            )?;
            match &s.nodes {
                Some(n) => writeln!(f, "  {:>10.1} {:>10.1} {:>10.1}", n.geometric, n.shifted, n.arithmetic)?,
                None => writeln!(f, "  {:>10} {:>10} {:>10}", "-", "-", "-")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_geomean_identities() {
        assert_eq!(shifted_geomean(&[7.5], 10.0).unwrap(), 7.5);
        assert_eq!(shifted_geomean(&[3.0, 3.0, 3.0], 100.0).unwrap(), 3.0);
        assert!(matches!(shifted_geomean(&[], 10.0), Err(Error::EmptyInput)));
        assert!(shifted_geomean(&[-1.0], 10.0).is_err());
    }

    #[test]
    fn geomean_with_zero() {
        assert_eq!(geomean(&[0.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn variant_labels_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("fast".parse::<Variant>().is_err());
    }

    #[test]
    fn seeds_distinct_across_cells() {
        let specs = Grid::desk().instances(7);
        let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), specs.len());
        assert_eq!(Grid::desk().instances(7), specs);
    }

    #[test]
    fn csv_round_trip() {
        let rec = RunRecord {
            instance: "N16-K2-0.1q-0".into(),
            n: 16,
            k: 2,
            preset: "0.1q".into(),
            seed: 42,
            variant: "modulus+heur".into(),
            nodes: Some(12),
            time_s: Some(0.25),
            status: "optimal".into(),
            opt_card: Some(2),
            heur_card: Some(2),
            heur_time_s: Some(0.125),
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&rec), &mut buf, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instance,N,K,preset,seed,variant,nodes,time_s,status,opt_card,heur_card,heur_time_s\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![rec.clone()]);
        let mut bare = Vec::new();
        write_csv(std::slice::from_ref(&rec), &mut bare, false).unwrap();
        assert_eq!(read_csv(bare.as_slice()).unwrap()[0].time_s, None);
    }

    #[test]
    fn invalid_suite_rejected() {
        let cfg = SuiteConfig { workers: 0, ..SuiteConfig::default() };
        assert!(run_suite(&cfg).is_err());
        let cfg = SuiteConfig { variants: vec![], ..SuiteConfig::default() };
        assert!(run_suite(&cfg).is_err());
    }

    #[test]
    fn summary_excludes_heuristic_nodes() {
        let mk = |variant: &str, nodes: Option<usize>, t: f64| RunRecord {
            instance: "x".into(),
            n: 4,
            k: 2,
            preset: "0.1q".into(),
            seed: 0,
            variant: variant.into(),
            nodes,
            time_s: Some(t),
            status: "optimal".into(),
            opt_card: Some(1),
            heur_card: None,
            heur_time_s: None,
        };
        let recs = vec![mk("modulus", Some(10), 1.0), mk("heur", None, 0.5), mk("modulus", Some(1000), 3.0)];
        let s = summarize(&recs).unwrap();
        assert_eq!(s[0].variant, "modulus");
        assert_eq!(s[0].runs, 2);
        assert!((s[0].nodes.unwrap().arithmetic - 505.0).abs() < 1e-12);
        assert!(s[1].nodes.is_none());
        let shown = SummaryTable(&s).to_string();
        assert!(shown.lines().count() == 3);
    }
}
