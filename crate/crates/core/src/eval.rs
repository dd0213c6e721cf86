//! Monte Carlo estimation of reliable-pair probabilities and message
//! complexity bounds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{build_communicating_set, find_safe_cover, safe_set, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::explorer::{explorer_delivers, PathFinder};
use crate::nodeset::NodeSet;
use crate::sim::{check_safety, default_scripts, missing_deliveries, run_with, SimConfig};
use crate::topology::{NodeId, Topology, TopologyKind};
use crate::zones::ZoneSet;

/// Upper bound on messages sent by correct nodes:
/// `d · n · (n + n_border · n_ctr)`, where `n_ctr` counts zones and
/// `n_border` is the largest border. Saturates at `u128::MAX`.
pub fn complexity_bound(n: u64, d: u64, n_ctr: u64, n_border: u64) -> u128 {
    let (n, d) = (n as u128, d as u128);
    let per_source = (n_border as u128 * n_ctr as u128).saturating_add(n);
    d.saturating_mul(n).saturating_mul(per_source)
}

/// What decides whether a pair communicates reliably.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// The control-zone protocol with the order `W` zone family.
    Zones(u32),
    /// Majority over four node-disjoint paths.
    Explorer,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Zones(w) => write!(f, "{w}"),
            Method::Explorer => f.write_str("explorer"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("explorer") {
            return Ok(Method::Explorer);
        }
        match s.parse::<u32>() {
            Ok(w) if w >= 1 => Ok(Method::Zones(w)),
            _ => Err(Error::Config(format!(
                "invalid order {s:?}: expected a positive integer or \"explorer\""
            ))),
        }
    }
}

/// How the evaluated pair is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Any two distinct nodes; a Byzantine endpoint counts as a failure.
    #[default]
    All,
    /// Two distinct correct nodes.
    CorrectOnly,
}

impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(PairMode::All),
            "correct-only" => Ok(PairMode::CorrectOnly),
            other => Err(Error::Config(format!(
                "invalid pair mode {other:?}: expected \"all\" or \"correct-only\""
            ))),
        }
    }
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairMode::All => "all",
            PairMode::CorrectOnly => "correct-only",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologyKind,
    pub side: u32,
    pub method: Method,
    pub n_byz: usize,
    pub trials: u64,
    pub seed: u64,
    /// Fraction of trials replayed through the simulator.
    pub crosscheck: f64,
    /// Replays are skipped on networks larger than this.
    pub crosscheck_max_nodes: usize,
    pub pair_mode: PairMode,
    pub budget: u64,
}

impl ExperimentConfig {
    pub fn new(topology: TopologyKind, side: u32, method: Method, n_byz: usize, trials: u64, seed: u64) -> Self {
        ExperimentConfig {
            topology,
            side,
            method,
            n_byz,
            trials,
            seed,
            crosscheck: 0.0,
            crosscheck_max_nodes: 1024,
            pair_mode: PairMode::All,
            budget: DEFAULT_BUDGET,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n_byz >= n {
            return Err(Error::Config(format!(
                "{} Byzantine nodes leave no correct node among {n}",
                self.n_byz
            )));
        }
        if self.pair_mode == PairMode::CorrectOnly && n - self.n_byz < 2 {
            return Err(Error::Config(
                "correct-only pairs need at least two correct nodes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crosscheck) {
            return Err(Error::Config(format!(
                "crosscheck fraction {} is outside [0, 1]",
                self.crosscheck
            )));
        }
        Ok(())
    }
}

/// Topology and zone family shared by every trial of a sweep row.
pub struct Network {
    pub topo: Topology,
    pub zones: Option<ZoneSet>,
    /// Flow network for the path baseline.
    pub paths: Option<PathFinder>,
}

impl Network {
    pub fn build(kind: TopologyKind, side: u32, method: Method) -> Result<Self> {
        let topo = Topology::build(kind, side)?;
        let (zones, paths) = match method {
            Method::Zones(w) => (Some(ZoneSet::order(&topo, w)?), None),
            Method::Explorer => (None, Some(PathFinder::new(&topo))),
        };
        Ok(Network { topo, zones, paths })
    }
}

/// Simulator replay of one trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossCheck {
    /// Reliable pairs whose message was never accepted.
    pub missing: usize,
    /// False acceptances at nodes claimed safe.
    pub violations: usize,
    /// Messages sent by correct nodes.
    pub correct_messages: u64,
}

impl CrossCheck {
    pub fn agrees(&self) -> bool {
        self.missing == 0 && self.violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub byz: NodeSet,
    pub pair: (NodeId, NodeId),
    pub success: bool,
    /// `None` for the path baseline.
    pub cover_found: Option<bool>,
    /// Reliable nodes over correct nodes; `None` without a cover.
    pub reliable_frac: Option<f64>,
    pub crosscheck: Option<CrossCheck>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Byzantine placement of a trial. It depends only on the seed, trial index,
/// network size and Byzantine count, so rows that differ only in the zone
/// order see identical placements.
pub fn placement(n: usize, n_byz: usize, seed: u64, trial: u64) -> NodeSet {
    let mut rng = trial_rng(seed, trial);
    draw_placement(&mut rng, n, n_byz)
}

fn draw_placement(rng: &mut ChaCha8Rng, n: usize, n_byz: usize) -> NodeSet {
    NodeSet::from_nodes(n, sample(rng, n, n_byz).into_iter().map(NodeId::from_index))
}

pub fn run_trial(net: &Network, cfg: &ExperimentConfig, trial: u64) -> Result<TrialOutcome> {
    let topo = &net.topo;
    let n = topo.len();
    cfg.validate(n)?;
    let mut rng = trial_rng(cfg.seed, trial);
    let byz = draw_placement(&mut rng, n, cfg.n_byz);
    let pair = match cfg.pair_mode {
        PairMode::All => {
            let v = sample(&mut rng, n, 2);
            (NodeId::from_index(v.index(0)), NodeId::from_index(v.index(1)))
        }
        PairMode::CorrectOnly => {
            let correct: Vec<NodeId> = topo.nodes().filter(|&p| !byz.contains(p)).collect();
            let v = sample(&mut rng, correct.len(), 2);
            (correct[v.index(0)], correct[v.index(1)])
        }
    };
    let replay = cfg.crosscheck > 0.0 && rng.gen::<f64>() < cfg.crosscheck;
    let (a, b) = pair;

    let Some(zs) = &net.zones else {
        let finder = net
            .paths
            .as_ref()
            .ok_or_else(|| Error::invalid("run_trial: network has neither zones nor a path finder"))?;
        let success = explorer_delivers(finder, topo, a, b, &byz)?;
        return Ok(TrialOutcome {
            byz,
            pair,
            success,
            cover_found: None,
            reliable_frac: None,
            crosscheck: None,
        });
    };

    let Some(cover) = find_safe_cover(topo, zs, &byz, cfg.budget) else {
        return Ok(TrialOutcome {
            byz,
            pair,
            success: false,
            cover_found: Some(false),
            reliable_frac: None,
            crosscheck: None,
        });
    };
    let safe = safe_set(topo, &cover)?;
    let origin = if !byz.contains(a) {
        a
    } else if !byz.contains(b) {
        b
    } else {
        let correct: Vec<NodeId> = topo.nodes().filter(|&p| !byz.contains(p)).collect();
        correct[rng.gen_range(0..correct.len())]
    };
    let communicating = build_communicating_set(topo, zs, &byz, origin)?;
    let reliable = safe.intersection(&communicating);
    let success = reliable.contains(a) && reliable.contains(b);
    let reliable_frac = reliable.len() as f64 / (n - byz.len()) as f64;

    let crosscheck = if replay && n <= cfg.crosscheck_max_nodes {
        let scripts = default_scripts(topo, zs, &byz, &mut rng);
        let trace = run_with(topo, zs, &byz, &scripts, &SimConfig::summary(rng.gen()))?;
        let claimed = safe.difference(&byz);
        Some(CrossCheck {
            missing: missing_deliveries(&trace, &reliable).len(),
            violations: check_safety(&trace, &claimed).len(),
            correct_messages: trace.sent.total() - trace.injected,
        })
    } else {
        None
    };

    Ok(TrialOutcome {
        byz,
        pair,
        success,
        cover_found: Some(true),
        reliable_frac: Some(reliable_frac),
        crosscheck,
    })
}

/// Aggregate of a batch of trials. Confidence half-widths use the normal
/// approximation at 95%.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub topology: TopologyKind,
    pub side: u32,
    pub method: Method,
    pub n_byz: usize,
    pub trials: u64,
    pub seed: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci95: f64,
    /// Fraction of trials with a cover, `None` for the path baseline.
    pub p_exists: Option<f64>,
    pub ci95_exists: Option<f64>,
    /// Mean reliable fraction over the trials that found a cover.
    pub mean_reliable_frac: Option<f64>,
    pub ci95_frac: Option<f64>,
    pub crosschecks: u64,
    pub crosscheck_failures: u64,
}

fn binomial_ci(p: f64, trials: u64) -> f64 {
    1.96 * (p * (1.0 - p) / trials as f64).sqrt()
}

pub fn estimate(net: &Network, cfg: &ExperimentConfig) -> Result<Estimate> {
    cfg.validate(net.topo.len())?;
    let mut successes = 0u64;
    let mut covers = 0u64;
    let (mut frac_n, mut frac_sum, mut frac_sq) = (0u64, 0.0f64, 0.0f64);
    let (mut crosschecks, mut crosscheck_failures) = (0u64, 0u64);
    // trials run in parallel; summing in trial order keeps results bit-identical
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(net, cfg, trial))
        .collect::<Result<_>>()?;
    for t in outcomes {
        successes += t.success as u64;
        covers += t.cover_found.unwrap_or(false) as u64;
        if let Some(f) = t.reliable_frac {
            frac_n += 1;
            frac_sum += f;
            frac_sq += f * f;
        }
        if let Some(c) = t.crosscheck {
            crosschecks += 1;
            crosscheck_failures += !c.agrees() as u64;
        }
    }
    let trials = cfg.trials;
    let p_hat = successes as f64 / trials as f64;
    let zoned = net.zones.is_some();
    let p_exists = zoned.then(|| covers as f64 / trials as f64);
    let mean = (frac_n > 0).then(|| frac_sum / frac_n as f64);
    let ci95_frac = mean.map(|m| {
        let var = (frac_sq / frac_n as f64 - m * m).max(0.0);
        1.96 * (var / frac_n as f64).sqrt()
    });
    Ok(Estimate {
        topology: cfg.topology,
        side: cfg.side,
        method: cfg.method,
        n_byz: cfg.n_byz,
        trials,
        seed: cfg.seed,
        successes,
        p_hat,
        ci95: binomial_ci(p_hat, trials),
        p_exists,
        ci95_exists: p_exists.map(|p| binomial_ci(p, trials)),
        mean_reliable_frac: mean,
        ci95_frac,
        crosschecks,
        crosscheck_failures,
    })
}

/// Builds the network and runs [`estimate`].
pub fn estimate_p(cfg: &ExperimentConfig) -> Result<Estimate> {
    let net = Network::build(cfg.topology, cfg.side, cfg.method)?;
    estimate(&net, cfg)
}

pub const CSV_HEADER: &str = "topology,N,W,n_B,trials,p_exists,mean_reliable_frac,p_hat,ci95,seed";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl Estimate {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{}",
            self.topology,
            self.side,
            self.method,
            self.n_byz,
            self.trials,
            opt(self.p_exists),
            opt(self.mean_reliable_frac),
            self.p_hat,
            self.ci95,
            self.seed
        )
    }
}

pub fn write_csv(rows: &[Estimate], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_formula() {
        assert_eq!(complexity_bound(100, 4, 36, 16), 4 * 100 * (100 + 16 * 36));
        assert_eq!(complexity_bound(0, 4, 1, 1), 0);
        // 10x10 torus at width 1: a hundred zones with eight border nodes each
        assert_eq!(complexity_bound(100, 4, 100, 8), 360_000);
        assert_eq!(complexity_bound(u64::MAX, u64::MAX, u64::MAX, u64::MAX), u128::MAX);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("3".parse::<Method>().unwrap(), Method::Zones(3));
        assert_eq!("Explorer".parse::<Method>().unwrap(), Method::Explorer);
        assert!("0".parse::<Method>().is_err());
        assert!("x".parse::<Method>().is_err());
    }

    #[test]
    fn no_byzantine_always_succeeds() {
        let cfg = ExperimentConfig::new(TopologyKind::Torus, 10, Method::Zones(2), 0, 20, 1);
        let e = estimate_p(&cfg).unwrap();
        assert_eq!(e.successes, 20);
        assert_eq!(e.p_exists, Some(1.0));
        assert_eq!(e.mean_reliable_frac, Some(1.0));
        assert_eq!(e.ci95, 0.0);
    }

    #[test]
    fn placements_shared_across_orders() {
        let mut cfg = ExperimentConfig::new(TopologyKind::Torus, 12, Method::Zones(1), 5, 5, 9);
        let n1 = Network::build(cfg.topology, 12, Method::Zones(1)).unwrap();
        let n3 = Network::build(cfg.topology, 12, Method::Zones(3)).unwrap();
        for trial in 0..5 {
            let a = run_trial(&n1, &cfg, trial).unwrap();
            cfg.method = Method::Zones(3);
            let b = run_trial(&n3, &cfg, trial).unwrap();
            cfg.method = Method::Zones(1);
            assert_eq!(a.byz, b.byz);
            assert_eq!(a.pair, b.pair);
            assert_eq!(a.byz, placement(144, 5, 9, trial));
        }
    }

    #[test]
    fn csv_row_format() {
        let cfg = ExperimentConfig::new(TopologyKind::Grid, 8, Method::Explorer, 2, 10, 4);
        let e = estimate_p(&cfg).unwrap();
        let row = e.csv_row();
        assert!(row.starts_with("grid,8,explorer,2,10,NA,NA,"), "{row}");
        assert!(row.ends_with(",4"));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::new(TopologyKind::Torus, 4, Method::Zones(1), 16, 1, 0);
        assert!(estimate_p(&cfg).is_err());
        cfg.n_byz = 1;
        cfg.trials = 0;
        assert!(estimate_p(&cfg).is_err());
        cfg.trials = 1;
        cfg.crosscheck = 2.0;
        assert!(estimate_p(&cfg).is_err());
    }

    #[test]
    fn crosscheck_replays_agree() {
        let mut cfg = ExperimentConfig::new(TopologyKind::Torus, 8, Method::Zones(2), 3, 10, 5);
        cfg.crosscheck = 1.0;
        let e = estimate_p(&cfg).unwrap();
        assert!(e.crosschecks > 0);
        assert_eq!(e.crosscheck_failures, 0);
    }
}
