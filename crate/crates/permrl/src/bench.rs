//! Benchmark harness: run generic / specific / token-swapper / oracle on a
//! shared instance set per topology, verify every circuit, and reduce the
//! records to ratio statistics shaped like a methods-comparison table.
//!
//! Ratio orientation: `method_value / generic_value`, so values above one
//! mean the generic model did better. File headers restate this.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::baselines::{token_swap, SwapOracle};
use crate::env::Permutation;
use crate::lattice::{embed_mask, enumerate_embeddings, TopologyMask};
use crate::policy::{ActMode, PolicyNet};
use crate::rng::{rng_for, tags};
use crate::synth::{default_step_cap, synthesize};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Generic,
    Specific,
    TokenSwap,
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Generic => "generic",
            Method::Specific => "specific",
            Method::TokenSwap => "tokenswap",
            Method::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s {
            "generic" => Ok(Method::Generic),
            "specific" => Ok(Method::Specific),
            "tokenswap" => Ok(Method::TokenSwap),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::BenchConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// A topology under test, at its canonical placement.
#[derive(Debug, Clone)]
pub struct NamedTopology {
    pub name: String,
    pub mask: TopologyMask,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub topologies: Vec<NamedTopology>,
    pub n_instances: usize,
    pub methods: Vec<Method>,
    pub generic_net: Option<PolicyNet>,
    pub specific_nets: BTreeMap<String, PolicyNet>,
    pub seed: u64,
    /// Sampling attempts for the generic model.
    pub attempts: usize,
    /// Trials for the token swapper.
    pub trials: usize,
    /// Wall-time repeats per call; the median is recorded.
    pub timing_repeats: usize,
    /// When false, `time_ns` is recorded as zero (deterministic output).
    pub record_timing: bool,
    pub threads: usize,
    pub step_cap: Option<usize>,
}

impl BenchConfig {
    pub fn new(topologies: Vec<NamedTopology>, methods: Vec<Method>, seed: u64) -> BenchConfig {
        BenchConfig {
            topologies,
            n_instances: 1000,
            methods,
            generic_net: None,
            specific_nets: BTreeMap::new(),
            seed,
            attempts: 10,
            trials: 1000,
            timing_repeats: 3,
            record_timing: true,
            threads: 1,
            step_cap: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.topologies.is_empty() {
            return Err(Error::BenchConfig("no topologies".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::BenchConfig("no methods".into()));
        }
        for topo in &self.topologies {
            if self.methods.contains(&Method::Generic) {
                let net = self
                    .generic_net
                    .as_ref()
                    .ok_or_else(|| Error::BenchConfig("generic method needs a model".into()))?;
                let lat = topo.mask.lattice();
                if lat.rows() != net.rows() || lat.cols() != net.cols() {
                    return Err(Error::BenchConfig(format!(
                        "topology {} lattice does not match generic model lattice",
                        topo.name
                    )));
                }
            }
            if self.methods.contains(&Method::Specific) {
                let net = self.specific_nets.get(&topo.name).ok_or_else(|| {
                    Error::BenchConfig(format!("no specific model for topology {}", topo.name))
                })?;
                let lat = topo.mask.lattice();
                if lat.rows() != net.rows() || lat.cols() != net.cols() {
                    return Err(Error::BenchConfig(format!(
                        "specific model for {} has wrong lattice",
                        topo.name
                    )));
                }
            }
            if self.methods.contains(&Method::Oracle)
                && topo.mask.num_active_nodes() > crate::baselines::ORACLE_MAX_NODES
            {
                return Err(Error::BenchConfig(format!(
                    "oracle method cannot handle {} active nodes on {}",
                    topo.mask.num_active_nodes(),
                    topo.name
                )));
            }
        }
        Ok(())
    }
}

/// One comparison row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRecord {
    pub topology: String,
    pub instance: usize,
    pub method: Method,
    pub gates: usize,
    pub depth: usize,
    pub time_ns: u64,
    pub verified: bool,
    pub attempts: usize,
}

/// Run every requested method on an identical instance set per topology.
pub fn run_suite(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for ti in 0..cfg.topologies.len() {
        for i in 0..cfg.n_instances {
            jobs.push((ti, i));
        }
    }
    // Per-topology preparations: embeddings for the generic method, the
    // oracle table when requested.
    let mut embeddings: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut oracles: Vec<Option<SwapOracle>> = Vec::new();
    for topo in &cfg.topologies {
        if cfg.methods.contains(&Method::Generic) {
            embeddings.push(enumerate_embeddings(&topo.mask, topo.mask.lattice()));
        } else {
            embeddings.push(Vec::new());
        }
        if cfg.methods.contains(&Method::Oracle) {
            oracles.push(Some(SwapOracle::new(&topo.mask)?));
        } else {
            oracles.push(None);
        }
    }

    let run_job = |&(ti, i): &(usize, usize)| -> Result<Vec<BenchRecord>> {
        run_instance(cfg, ti, i, &embeddings[ti], oracles[ti].as_ref())
    };

    let nested: Vec<Vec<BenchRecord>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>()
        })?
    } else {
        jobs.iter().map(run_job).collect::<Result<Vec<_>>>()?
    };
    Ok(nested.into_iter().flatten().collect())
}

fn run_instance(
    cfg: &BenchConfig,
    ti: usize,
    i: usize,
    embeddings: &[Vec<usize>],
    oracle: Option<&SwapOracle>,
) -> Result<Vec<BenchRecord>> {
    let topo = &cfg.topologies[ti];
    let mut inst_rng = rng_for(cfg.seed, &[tags::BENCH, ti as u64, i as u64, 0]);
    let perm = Permutation::random_on_mask(&topo.mask, &mut inst_rng);
    let mut out = Vec::with_capacity(cfg.methods.len());

    for &method in &cfg.methods {
        let record = match method {
            Method::Generic => {
                let net = cfg.generic_net.as_ref().unwrap();
                // Uniformly random valid embedding of the topology.
                let mut emb_rng = rng_for(cfg.seed, &[tags::BENCH, ti as u64, i as u64, 1]);
                let embedding = &embeddings[emb_rng.gen_range(0..embeddings.len())];
                let placed = embed_mask(&topo.mask, topo.mask.lattice(), embedding)?;
                let moved = transport_permutation(&perm, &topo.mask, embedding);
                let step_cap = cfg.step_cap.unwrap_or_else(|| default_step_cap(&placed));
                let (result, time_ns) = timed(cfg, || {
                    let mut rng = rng_for(cfg.seed, &[tags::BENCH, ti as u64, i as u64, 2]);
                    synthesize(
                        net,
                        &moved,
                        &placed,
                        ActMode::Sampling,
                        cfg.attempts,
                        step_cap,
                        &mut rng,
                    )
                })?;
                match result.circuit {
                    Some(c) => {
                        check_verified(&c, &topo.name, method)?;
                        BenchRecord {
                            topology: topo.name.clone(),
                            instance: i,
                            method,
                            gates: c.gate_count(),
                            depth: c.depth(),
                            time_ns,
                            verified: true,
                            attempts: result.attempts_used,
                        }
                    }
                    None => BenchRecord {
                        topology: topo.name.clone(),
                        instance: i,
                        method,
                        gates: 0,
                        depth: 0,
                        time_ns,
                        verified: false,
                        attempts: result.attempts_used,
                    },
                }
            }
            Method::Specific => {
                let net = &cfg.specific_nets[&topo.name];
                let step_cap = cfg.step_cap.unwrap_or_else(|| default_step_cap(&topo.mask));
                let (result, time_ns) = timed(cfg, || {
                    let mut rng = rng_for(cfg.seed, &[tags::BENCH, ti as u64, i as u64, 3]);
                    synthesize(net, &perm, &topo.mask, ActMode::Greedy, 1, step_cap, &mut rng)
                })?;
                match result.circuit {
                    Some(c) => {
                        check_verified(&c, &topo.name, method)?;
                        BenchRecord {
                            topology: topo.name.clone(),
                            instance: i,
                            method,
                            gates: c.gate_count(),
                            depth: c.depth(),
                            time_ns,
                            verified: true,
                            attempts: result.attempts_used,
                        }
                    }
                    None => BenchRecord {
                        topology: topo.name.clone(),
                        instance: i,
                        method,
                        gates: 0,
                        depth: 0,
                        time_ns,
                        verified: false,
                        attempts: result.attempts_used,
                    },
                }
            }
            Method::TokenSwap => {
                let (circuit, time_ns) = timed(cfg, || {
                    let mut rng = rng_for(cfg.seed, &[tags::BENCH, ti as u64, i as u64, 4]);
                    token_swap(&perm, &topo.mask, cfg.trials, &mut rng)
                })?;
                check_verified(&circuit, &topo.name, method)?;
                BenchRecord {
                    topology: topo.name.clone(),
                    instance: i,
                    method,
                    gates: circuit.gate_count(),
                    depth: circuit.depth(),
                    time_ns,
                    verified: true,
                    attempts: cfg.trials,
                }
            }
            Method::Oracle => {
                let oracle = oracle.expect("oracle prepared when requested");
                let ((gates, circuit), time_ns) = timed(cfg, || oracle.witness(&perm))?;
                check_verified(&circuit, &topo.name, method)?;
                BenchRecord {
                    topology: topo.name.clone(),
                    instance: i,
                    method,
                    gates,
                    depth: circuit.depth(),
                    time_ns,
                    verified: true,
                    attempts: 1,
                }
            }
        };
        out.push(record);
    }
    Ok(out)
}

fn check_verified(circuit: &crate::synth::SwapCircuit, topo: &str, method: Method) -> Result<()> {
    if !circuit.verify() {
        return Err(Error::Internal(format!(
            "unverified circuit from {} on {topo}",
            method.as_str()
        )));
    }
    Ok(())
}

/// Median wall time over `timing_repeats` identical calls (the randomness is
/// reseeded inside `f`, so every repeat returns the same result).
fn timed<T>(cfg: &BenchConfig, mut f: impl FnMut() -> Result<T>) -> Result<(T, u64)> {
    if !cfg.record_timing {
        return Ok((f()?, 0));
    }
    let mut times = Vec::with_capacity(cfg.timing_repeats.max(1));
    let mut value = None;
    for _ in 0..cfg.timing_repeats.max(1) {
        let start = Instant::now();
        let v = f()?;
        times.push(start.elapsed().as_nanos() as u64);
        value = Some(v);
    }
    times.sort_unstable();
    Ok((value.unwrap(), times[times.len() / 2]))
}

/// Map a permutation on the canonical mask through a node embedding;
/// non-image nodes stay fixed.
fn transport_permutation(
    perm: &Permutation,
    mask: &TopologyMask,
    embedding: &[usize],
) -> Permutation {
    let n = mask.lattice().num_nodes();
    let active: Vec<usize> = mask.active_nodes().collect();
    let mut phi: Vec<Option<usize>> = vec![None; n];
    for (k, &src) in active.iter().enumerate() {
        phi[src] = Some(embedding[k]);
    }
    let mut mapping: Vec<usize> = (0..n).collect();
    for &src in &active {
        let dest = phi[src].unwrap();
        mapping[dest] = phi[perm.mapping()[src]].expect("active image");
    }
    Permutation::from_mapping(mapping).expect("embedding preserves bijection")
}

/// Histogram of ratios: fixed bins of width 0.05 over [0.5, 2.0] plus
/// underflow and overflow bins, so the 0.95 / 1.05 thresholds fall exactly
/// on bin edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub underflow: usize,
    pub overflow: usize,
    pub bins: Vec<usize>,
}

pub const HIST_LO: f64 = 0.5;
pub const HIST_HI: f64 = 2.0;
pub const HIST_WIDTH: f64 = 0.05;

impl Histogram {
    fn new() -> Histogram {
        let n = ((HIST_HI - HIST_LO) / HIST_WIDTH).round() as usize;
        Histogram {
            underflow: 0,
            overflow: 0,
            bins: vec![0; n],
        }
    }

    fn add(&mut self, ratio: f64) {
        if ratio < HIST_LO {
            self.underflow += 1;
        } else if ratio >= HIST_HI {
            self.overflow += 1;
        } else {
            let idx = ((ratio - HIST_LO) / HIST_WIDTH) as usize;
            let last = self.bins.len() - 1;
            self.bins[idx.min(last)] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.underflow + self.overflow + self.bins.iter().sum::<usize>()
    }
}

/// Summary row per (topology, method): fractions of instances with ratios
/// under 0.95 and over 1.05 for gates and depth, mean runtime ratio, and
/// the method's failure count.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub topology: String,
    pub method: Method,
    pub frac_lt_095_gates: f64,
    pub frac_gt_105_gates: f64,
    pub frac_lt_095_depth: f64,
    pub frac_gt_105_depth: f64,
    pub mean_time_ratio: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct RatioSummary {
    pub rows: Vec<SummaryRow>,
    /// (topology, method) -> histogram of gate ratios.
    pub gate_histograms: Vec<(String, Method, Histogram)>,
    pub depth_histograms: Vec<(String, Method, Histogram)>,
    /// Instances dropped because the generic circuit had zero gates.
    pub excluded_zero_gates: usize,
    /// Instances dropped because no verified generic record existed.
    pub excluded_no_generic: usize,
}

/// Reduce records to per-(topology, method) ratio statistics against the
/// generic method. Record order does not matter.
pub fn summarize(records: &[BenchRecord]) -> RatioSummary {
    let mut topo_order: Vec<&str> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    let mut generic: BTreeMap<(&str, usize), &BenchRecord> = BTreeMap::new();
    for r in records {
        if !topo_order.contains(&r.topology.as_str()) {
            topo_order.push(&r.topology);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
        if r.method == Method::Generic && r.verified {
            generic.insert((&r.topology, r.instance), r);
        }
    }
    methods.sort_unstable();

    let mut summary = RatioSummary {
        rows: Vec::new(),
        gate_histograms: Vec::new(),
        depth_histograms: Vec::new(),
        excluded_zero_gates: 0,
        excluded_no_generic: 0,
    };

    for topo in &topo_order {
        for &method in &methods {
            let rows: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.topology == *topo && r.method == method)
                .collect();
            let failures = rows.iter().filter(|r| !r.verified).count();
            let mut gate_hist = Histogram::new();
            let mut depth_hist = Histogram::new();
            let mut lt_g = 0usize;
            let mut gt_g = 0usize;
            let mut lt_d = 0usize;
            let mut gt_d = 0usize;
            let mut counted = 0usize;
            let mut time_ratio_sum = 0.0;
            let mut time_counted = 0usize;
            for r in rows.iter().filter(|r| r.verified) {
                let Some(g) = generic.get(&(r.topology.as_str(), r.instance)) else {
                    summary.excluded_no_generic += 1;
                    continue;
                };
                if g.gates == 0 {
                    summary.excluded_zero_gates += 1;
                    continue;
                }
                counted += 1;
                let gate_ratio = r.gates as f64 / g.gates as f64;
                let depth_ratio = r.depth as f64 / g.depth.max(1) as f64;
                gate_hist.add(gate_ratio);
                depth_hist.add(depth_ratio);
                if gate_ratio < 0.95 {
                    lt_g += 1;
                }
                if gate_ratio > 1.05 {
                    gt_g += 1;
                }
                if depth_ratio < 0.95 {
                    lt_d += 1;
                }
                if depth_ratio > 1.05 {
                    gt_d += 1;
                }
                if g.time_ns > 0 {
                    time_ratio_sum += r.time_ns as f64 / g.time_ns as f64;
                    time_counted += 1;
                }
            }
            let frac = |k: usize| {
                if counted > 0 {
                    k as f64 / counted as f64
                } else {
                    f64::NAN
                }
            };
            summary.rows.push(SummaryRow {
                topology: topo.to_string(),
                method,
                frac_lt_095_gates: frac(lt_g),
                frac_gt_105_gates: frac(gt_g),
                frac_lt_095_depth: frac(lt_d),
                frac_gt_105_depth: frac(gt_d),
                mean_time_ratio: if time_counted > 0 {
                    time_ratio_sum / time_counted as f64
                } else {
                    f64::NAN
                },
                failures,
            });
            summary
                .gate_histograms
                .push((topo.to_string(), method, gate_hist));
            summary
                .depth_histograms
                .push((topo.to_string(), method, depth_hist));
        }
    }
    summary
}

const RECORDS_HEADER: &str = "topology,instance,method,gates,depth,time_ns,verified,attempts";
const SUMMARY_HEADER: &str = "topology,method,frac_lt_095_gates,frac_gt_105_gates,\
frac_lt_095_depth,frac_gt_105_depth,mean_time_ratio,failures";

/// Serialize records to delimited text.
pub fn format_records(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# one row per (topology, instance, method) run");
    let _ = writeln!(out, "{RECORDS_HEADER}");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.topology,
            r.instance,
            r.method.as_str(),
            r.gates,
            r.depth,
            r.time_ns,
            r.verified,
            r.attempts
        );
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') || line == RECORDS_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Parse(format!("record line has {} fields", f.len())));
        }
        out.push(BenchRecord {
            topology: f[0].to_string(),
            instance: parse_field(f[1])?,
            method: f[2].parse()?,
            gates: parse_field(f[3])?,
            depth: parse_field(f[4])?,
            time_ns: parse_field(f[5])?,
            verified: f[6]
                .parse()
                .map_err(|_| Error::Parse(format!("bad verified flag `{}`", f[6])))?,
            attempts: parse_field(f[7])?,
        });
    }
    Ok(out)
}

/// Serialize the summary table. Ratio orientation noted in the header.
pub fn format_summary(summary: &RatioSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# ratios are method/generic; values > 1 mean the generic model did better"
    );
    let _ = writeln!(
        out,
        "# excluded: {} zero-gate generic instances, {} without a generic record",
        summary.excluded_zero_gates, summary.excluded_no_generic
    );
    let _ = writeln!(out, "{SUMMARY_HEADER}");
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.topology,
            r.method.as_str(),
            r.frac_lt_095_gates,
            r.frac_gt_105_gates,
            r.frac_lt_095_depth,
            r.frac_gt_105_depth,
            r.mean_time_ratio,
            r.failures
        );
    }
    out
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') || line == SUMMARY_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Parse(format!("summary line has {} fields", f.len())));
        }
        out.push(SummaryRow {
            topology: f[0].to_string(),
            method: f[1].parse()?,
            frac_lt_095_gates: parse_field(f[2])?,
            frac_gt_105_gates: parse_field(f[3])?,
            frac_lt_095_depth: parse_field(f[4])?,
            frac_gt_105_depth: parse_field(f[5])?,
            mean_time_ratio: parse_field(f[6])?,
            failures: parse_field(f[7])?,
        });
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad field `{tok}`")))
}

/// Write `records.csv` and `summary.csv` under `dir`.
pub fn export(
    summary: &RatioSummary,
    records: &[BenchRecord],
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let records_path = dir.join("records.csv");
    let summary_path = dir.join("summary.csv");
    std::fs::write(&records_path, format_records(records))
        .map_err(|e| Error::io(records_path.display().to_string(), e))?;
    std::fs::write(&summary_path, format_summary(summary))
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    Ok((records_path, summary_path))
}
