//! Exhaustive single-bit-flip campaigns and the double-bit-flip rates derived
//! from them.
//!
//! Rates are kept as exact counts over a shared denominator so that the
//! cross-replica derivation can be compared bit-for-bit against the
//! brute-force double-fault simulation.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellId, ModuleMap, Netlist, ReplicaTag};
use crate::sim::{FaultSpec, Injection, RunResult, SimError, SimProgram, Stimulus, LANES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CampaignError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("campaign has no injections")]
    EmptyCampaign,
    #[error("{0} flip-flops are shared between replicas; use the brute-force double-fault oracle")]
    SharedStateUnsupported(usize),
    #[error("malformed campaign file, line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeClass {
    Silent,
    Critical,
    Detected,
    Hang,
}

impl OutcomeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::Silent => "silent",
            OutcomeClass::Critical => "critical",
            OutcomeClass::Detected => "detected",
            OutcomeClass::Hang => "hang",
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "silent" => Ok(OutcomeClass::Silent),
            "critical" => Ok(OutcomeClass::Critical),
            "detected" => Ok(OutcomeClass::Detected),
            "hang" => Ok(OutcomeClass::Hang),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

/// Classifies a faulty run against the gold run, both sampled at the gold
/// completion time.
pub fn classify(run: &RunResult, gold: &RunResult) -> OutcomeClass {
    classify_outputs(run.done_ok_at_t, run.out_a, run.out_b, gold)
}

fn classify_outputs(done_ok: bool, out_a: u64, out_b: u64, gold: &RunResult) -> OutcomeClass {
    if !done_ok {
        OutcomeClass::Hang
    } else if out_a == gold.out_a && out_b == gold.out_b {
        OutcomeClass::Silent
    } else if out_a == out_b && out_a != gold.out_a {
        OutcomeClass::Critical
    } else {
        OutcomeClass::Detected
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SbfRecord {
    pub ff: CellId,
    pub cycle: usize,
    pub class: OutcomeClass,
    pub done_ok: bool,
    pub out_a: u64,
    pub out_b: u64,
    pub replica: ReplicaTag,
}

/// Gold run plus one record per `(flip-flop, cycle)` with cycle in `[0, T]`,
/// sorted by flip-flop id then cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SbfCampaign {
    pub gold: RunResult,
    pub records: Vec<SbfRecord>,
}

impl SbfCampaign {
    pub fn done_time(&self) -> usize {
        self.gold.done_time.expect("campaign gold run completed")
    }
}

/// Class counts over a common denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ErrorRates {
    pub critical: u64,
    pub detected: u64,
    pub hang: u64,
    pub silent: u64,
    pub denominator: u64,
}

/// The four rates a model can be trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateLabel {
    Cer,
    Der,
    Her,
    Ser,
}

impl RateLabel {
    pub const ALL: [RateLabel; 4] = [RateLabel::Cer, RateLabel::Der, RateLabel::Her, RateLabel::Ser];

    pub fn as_str(self) -> &'static str {
        match self {
            RateLabel::Cer => "cer",
            RateLabel::Der => "der",
            RateLabel::Her => "her",
            RateLabel::Ser => "ser",
        }
    }
}

impl fmt::Display for RateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RateLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RateLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown label `{s}` (expected cer, der, her or ser)"))
    }
}

impl ErrorRates {
    fn add(&mut self, class: OutcomeClass, n: u64) {
        match class {
            OutcomeClass::Critical => self.critical += n,
            OutcomeClass::Detected => self.detected += n,
            OutcomeClass::Hang => self.hang += n,
            OutcomeClass::Silent => self.silent += n,
        }
        self.denominator += n;
    }

    pub fn count(&self, label: RateLabel) -> u64 {
        match label {
            RateLabel::Cer => self.critical,
            RateLabel::Der => self.detected,
            RateLabel::Her => self.hang,
            RateLabel::Ser => self.silent,
        }
    }

    pub fn rate(&self, label: RateLabel) -> f64 {
        self.count(label) as f64 / self.denominator as f64
    }

    pub fn cer(&self) -> f64 {
        self.rate(RateLabel::Cer)
    }

    pub fn der(&self) -> f64 {
        self.rate(RateLabel::Der)
    }

    pub fn her(&self) -> f64 {
        self.rate(RateLabel::Her)
    }

    pub fn ser(&self) -> f64 {
        self.rate(RateLabel::Ser)
    }

    /// `num/den` form of one rate.
    pub fn ratio(&self, label: RateLabel) -> String {
        format!("{}/{}", self.count(label), self.denominator)
    }

    pub fn from_ratios(cer: &str, der: &str, her: &str, ser: &str) -> Result<ErrorRates, String> {
        let parse = |s: &str| -> Result<(u64, u64), String> {
            let (n, d) = s.split_once('/').ok_or_else(|| format!("`{s}` is not num/den"))?;
            Ok((
                n.trim().parse().map_err(|e| format!("`{s}`: {e}"))?,
                d.trim().parse().map_err(|e| format!("`{s}`: {e}"))?,
            ))
        };
        let parts = [parse(cer)?, parse(der)?, parse(her)?, parse(ser)?];
        let den = parts[0].1;
        if parts.iter().any(|p| p.1 != den) {
            return Err("rates do not share a denominator".into());
        }
        let rates = ErrorRates {
            critical: parts[0].0,
            detected: parts[1].0,
            hang: parts[2].0,
            silent: parts[3].0,
            denominator: den,
        };
        if rates.critical + rates.detected + rates.hang + rates.silent != den {
            return Err("class counts do not sum to the denominator".into());
        }
        Ok(rates)
    }
}

fn ordered_dffs(map: &ModuleMap) -> Vec<(CellId, ReplicaTag)> {
    let mut ffs: Vec<(CellId, ReplicaTag)> = map
        .ffs_a
        .iter()
        .map(|&f| (f, ReplicaTag::A))
        .chain(map.ffs_b.iter().map(|&f| (f, ReplicaTag::B)))
        .chain(map.ffs_shared.iter().map(|&f| (f, ReplicaTag::Shared)))
        .collect();
    ffs.sort();
    ffs
}

/// Runs `items` in chunks of [`LANES`] either inline or on a dedicated pool.
fn dispatch<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>, CampaignError>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Result<Vec<R>, CampaignError> + Sync + Send,
{
    if jobs <= 1 {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(LANES) {
            out.extend(f(chunk)?);
        }
        return Ok(out);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let chunks: Vec<Vec<R>> = pool.install(|| {
        items
            .par_chunks(LANES)
            .map(&f)
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Exhaustive single-bit-flip campaign: every flip-flop at every cycle of the
/// gold run, `|DFF| x (T + 1)` injections.
pub fn run_sbf_campaign(
    prog: &SimProgram,
    stim: &Stimulus,
    map: &ModuleMap,
) -> Result<SbfCampaign, CampaignError> {
    run_sbf_campaign_with_jobs(prog, stim, map, 1)
}

pub fn run_sbf_campaign_with_jobs(
    prog: &SimProgram,
    stim: &Stimulus,
    map: &ModuleMap,
    jobs: usize,
) -> Result<SbfCampaign, CampaignError> {
    let gold = prog.run_gold(stim)?;
    let t = gold.done_time.expect("gold run sets done_time");
    let targets: Vec<(Injection, ReplicaTag)> = ordered_dffs(map)
        .into_iter()
        .flat_map(|(ff, tag)| (0..=t).map(move |cycle| (Injection { ff, cycle }, tag)))
        .collect();
    let records = dispatch(&targets, jobs, |chunk| {
        let faults: Vec<FaultSpec> = chunk
            .iter()
            .map(|(inj, _)| FaultSpec {
                injections: vec![*inj],
            })
            .collect();
        let runs = prog.run_faults(stim, &faults, &gold)?;
        Ok(chunk
            .iter()
            .zip(runs)
            .map(|((inj, tag), run)| SbfRecord {
                ff: inj.ff,
                cycle: inj.cycle,
                class: classify(&run, &gold),
                done_ok: run.done_ok_at_t,
                out_a: run.out_a,
                out_b: run.out_b,
                replica: *tag,
            })
            .collect())
    })?;
    Ok(SbfCampaign { gold, records })
}

/// Per-class fractions of a single-fault campaign.
pub fn sbf_rates(records: &[SbfRecord]) -> Result<ErrorRates, CampaignError> {
    if records.is_empty() {
        return Err(CampaignError::EmptyCampaign);
    }
    let mut rates = ErrorRates::default();
    for r in records {
        rates.add(r.class, 1);
    }
    Ok(rates)
}

/// Double-fault rates from single-fault records, one flip in each replica,
/// every cycle combination, no extra simulation.
///
/// Under replica independence a pair behaves as replica A under `r1` and
/// replica B under `r2`: it hangs if either constituent hangs, and otherwise
/// is classified on `(r1.out_a, r2.out_b)`. Records are bucketed by output
/// word so the cost is linear in the record count.
pub fn derive_dbf(campaign: &SbfCampaign, map: &ModuleMap) -> Result<ErrorRates, CampaignError> {
    if !map.ffs_shared.is_empty() {
        return Err(CampaignError::SharedStateUnsupported(map.ffs_shared.len()));
    }
    let gold = &campaign.gold;
    let (mut n_a, mut n_b, mut hang_a, mut hang_b) = (0u64, 0u64, 0u64, 0u64);
    let mut words_a: BTreeMap<u64, u64> = BTreeMap::new();
    let mut words_b: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &campaign.records {
        let hang = r.class == OutcomeClass::Hang;
        match r.replica {
            ReplicaTag::A => {
                n_a += 1;
                if hang {
                    hang_a += 1;
                } else {
                    *words_a.entry(r.out_a).or_default() += 1;
                }
            }
            ReplicaTag::B => {
                n_b += 1;
                if hang {
                    hang_b += 1;
                } else {
                    *words_b.entry(r.out_b).or_default() += 1;
                }
            }
            ReplicaTag::Shared => unreachable!("no shared flip-flops"),
        }
    }
    let denominator = n_a * n_b;
    if denominator == 0 {
        return Err(CampaignError::EmptyCampaign);
    }
    let hang = hang_a * n_b + n_a * hang_b - hang_a * hang_b;
    let silent = words_a.get(&gold.out_a).copied().unwrap_or(0)
        * words_b.get(&gold.out_b).copied().unwrap_or(0);
    let critical: u64 = words_a
        .iter()
        .filter(|(&w, _)| w != gold.out_a)
        .map(|(w, &ca)| ca * words_b.get(w).copied().unwrap_or(0))
        .sum();
    Ok(ErrorRates {
        critical,
        detected: denominator - hang - silent - critical,
        hang,
        silent,
        denominator,
    })
}

/// Simulates every cross-replica fault pair directly. Needs no independence
/// assumption, so it arbitrates [`derive_dbf`] on small designs.
pub fn brute_force_dbf(
    prog: &SimProgram,
    stim: &Stimulus,
    map: &ModuleMap,
    gold: &RunResult,
    jobs: usize,
) -> Result<ErrorRates, CampaignError> {
    let t = gold.done_time.ok_or(SimError::GoldNeverDone {
        max_cycles: stim.max_cycles,
    })?;
    let side = |ffs: &[CellId]| -> Vec<Injection> {
        let mut v: Vec<Injection> = ffs
            .iter()
            .flat_map(|&ff| (0..=t).map(move |cycle| Injection { ff, cycle }))
            .collect();
        v.sort();
        v
    };
    let a = side(&map.ffs_a);
    let b = side(&map.ffs_b);
    let pairs: Vec<(Injection, Injection)> = a
        .iter()
        .flat_map(|&ia| b.iter().map(move |&ib| (ia, ib)))
        .collect();
    if pairs.is_empty() {
        return Err(CampaignError::EmptyCampaign);
    }
    let classes = dispatch(&pairs, jobs, |chunk| {
        let faults: Vec<FaultSpec> = chunk.iter().map(|&(x, y)| FaultSpec::pair(x, y)).collect();
        let runs = prog.run_faults(stim, &faults, gold)?;
        Ok(runs.iter().map(|r| classify(r, gold)).collect())
    })?;
    let mut rates = ErrorRates::default();
    for c in classes {
        rates.add(c, 1);
    }
    Ok(rates)
}

/// Writes the campaign record file: one `ff_id,cycle,replica,class,done_ok,
/// out_a,out_b` line per injection followed by `#` footer lines.
pub fn write_campaign_file(
    netlist: &Netlist,
    campaign: &SbfCampaign,
    sbf: &ErrorRates,
    dbf: &ErrorRates,
) -> String {
    let mut out = String::new();
    for r in &campaign.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:x},{:x}",
            netlist.cell(r.ff).id,
            r.cycle,
            r.replica,
            r.class,
            u8::from(r.done_ok),
            r.out_a,
            r.out_b
        );
    }
    let _ = writeln!(
        out,
        "# gold out_a={:x} out_b={:x} t={}",
        campaign.gold.out_a,
        campaign.gold.out_b,
        campaign.done_time()
    );
    for (name, rates) in [("sbf", sbf), ("dbf", dbf)] {
        let _ = writeln!(
            out,
            "# {name} cer={} der={} her={} ser={}",
            rates.ratio(RateLabel::Cer),
            rates.ratio(RateLabel::Der),
            rates.ratio(RateLabel::Her),
            rates.ratio(RateLabel::Ser)
        );
    }
    out
}

/// Parsed form of a campaign record file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignFile {
    /// `(ff_id, cycle, replica, class, done_ok, out_a, out_b)`.
    pub records: Vec<(String, usize, ReplicaTag, OutcomeClass, bool, u64, u64)>,
    pub gold_out_a: u64,
    pub gold_out_b: u64,
    pub done_time: usize,
    pub sbf: ErrorRates,
    pub dbf: ErrorRates,
}

pub fn read_campaign_file(text: &str) -> Result<CampaignFile, CampaignError> {
    let err = |line: usize, msg: String| CampaignError::Format { line, msg };
    let mut records = Vec::new();
    let mut gold = None;
    let mut sbf = None;
    let mut dbf = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        if let Some(footer) = line.strip_prefix("# ") {
            let mut fields = footer.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let kv: BTreeMap<&str, &str> = fields.filter_map(|f| f.split_once('=')).collect();
            let get = |k: &str| kv.get(k).copied().ok_or_else(|| err(ln, format!("missing `{k}`")));
            match kind {
                "gold" => {
                    let hex = |k: &str| {
                        get(k).and_then(|v| u64::from_str_radix(v, 16).map_err(|e| err(ln, e.to_string())))
                    };
                    let t = get("t")?.parse().map_err(|e: std::num::ParseIntError| err(ln, e.to_string()))?;
                    gold = Some((hex("out_a")?, hex("out_b")?, t));
                }
                "sbf" | "dbf" => {
                    let rates = ErrorRates::from_ratios(get("cer")?, get("der")?, get("her")?, get("ser")?)
                        .map_err(|m| err(ln, m))?;
                    if kind == "sbf" {
                        sbf = Some(rates);
                    } else {
                        dbf = Some(rates);
                    }
                }
                other => return Err(err(ln, format!("unknown footer `{other}`"))),
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(ln, format!("expected 7 fields, found {}", f.len())));
        }
        let replica = match f[2] {
            "A" => ReplicaTag::A,
            "B" => ReplicaTag::B,
            "S" => ReplicaTag::Shared,
            other => return Err(err(ln, format!("bad replica `{other}`"))),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|e| err(ln, e.to_string()));
        let hex = |s: &str| u64::from_str_radix(s, 16).map_err(|e| err(ln, e.to_string()));
        records.push((
            f[0].to_string(),
            num(f[1])?,
            replica,
            f[3].parse().map_err(|m| err(ln, m))?,
            f[4] == "1",
            hex(f[5])?,
            hex(f[6])?,
        ));
    }
    let (gold_out_a, gold_out_b, done_time) = gold.ok_or_else(|| err(0, "missing gold footer".into()))?;
    Ok(CampaignFile {
        records,
        gold_out_a,
        gold_out_b,
        done_time,
        sbf: sbf.ok_or_else(|| err(0, "missing sbf footer".into()))?,
        dbf: dbf.ok_or_else(|| err(0, "missing dbf footer".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold() -> RunResult {
        RunResult {
            done_time: Some(2),
            done_ok_at_t: true,
            out_a: 0x63,
            out_b: 0x63,
        }
    }

    fn run(done_ok: bool, out_a: u64, out_b: u64) -> RunResult {
        RunResult {
            done_time: Some(2),
            done_ok_at_t: done_ok,
            out_a,
            out_b,
        }
    }

    #[test]
    fn classification_follows_the_taxonomy() {
        let g = gold();
        assert_eq!(classify(&run(true, 0x63, 0x63), &g), OutcomeClass::Silent);
        assert_eq!(classify(&run(true, 0x10, 0x10), &g), OutcomeClass::Critical);
        assert_eq!(classify(&run(true, 0x10, 0x63), &g), OutcomeClass::Detected);
        assert_eq!(classify(&run(true, 0x10, 0x11), &g), OutcomeClass::Detected);
        assert_eq!(classify(&run(false, 0x63, 0x63), &g), OutcomeClass::Hang);
        assert_eq!(classify(&run(false, 0x10, 0x10), &g), OutcomeClass::Hang);
    }

    fn rec(class: OutcomeClass, replica: ReplicaTag, out_a: u64, out_b: u64) -> SbfRecord {
        SbfRecord {
            ff: 0,
            cycle: 0,
            class,
            done_ok: class != OutcomeClass::Hang,
            out_a,
            out_b,
            replica,
        }
    }

    #[test]
    fn sbf_rates_are_class_fractions() {
        let mut records = Vec::new();
        records.extend((0..6).map(|_| rec(OutcomeClass::Detected, ReplicaTag::A, 1, 0x63)));
        records.push(rec(OutcomeClass::Hang, ReplicaTag::A, 0x63, 0x63));
        records.extend((0..5).map(|_| rec(OutcomeClass::Silent, ReplicaTag::B, 0x63, 0x63)));
        let r = sbf_rates(&records).unwrap();
        assert_eq!((r.critical, r.detected, r.hang, r.silent, r.denominator), (0, 6, 1, 5, 12));
        assert_eq!(r.der(), 0.5);
        assert_eq!(r.her(), 1.0 / 12.0);
        assert_eq!(r.ser(), 5.0 / 12.0);
        assert_eq!(sbf_rates(&[]), Err(CampaignError::EmptyCampaign));
    }

    fn map_ab() -> ModuleMap {
        ModuleMap {
            rules: Vec::new(),
            ffs_a: vec![0],
            ffs_b: vec![1],
            ffs_shared: Vec::new(),
        }
    }

    #[test]
    fn pairwise_composition_rules() {
        let g = gold();
        let camp = |a: SbfRecord, b: SbfRecord| SbfCampaign {
            gold: g,
            records: vec![a, b],
        };
        let silent_a = rec(OutcomeClass::Silent, ReplicaTag::A, 0x63, 0x63);
        let silent_b = rec(OutcomeClass::Silent, ReplicaTag::B, 0x63, 0x63);
        let r = derive_dbf(&camp(silent_a.clone(), silent_b.clone()), &map_ab()).unwrap();
        assert_eq!((r.silent, r.denominator), (1, 1));

        let bad_a = rec(OutcomeClass::Detected, ReplicaTag::A, 0x42, 0x63);
        let bad_b = rec(OutcomeClass::Detected, ReplicaTag::B, 0x63, 0x42);
        assert_eq!(derive_dbf(&camp(bad_a.clone(), bad_b), &map_ab()).unwrap().critical, 1);

        let other_b = rec(OutcomeClass::Detected, ReplicaTag::B, 0x63, 0x43);
        assert_eq!(derive_dbf(&camp(bad_a, other_b), &map_ab()).unwrap().detected, 1);

        let hang_a = rec(OutcomeClass::Hang, ReplicaTag::A, 0x63, 0x63);
        assert_eq!(derive_dbf(&camp(hang_a, silent_b), &map_ab()).unwrap().hang, 1);
    }

    #[test]
    fn shared_state_is_refused() {
        let map = ModuleMap {
            ffs_shared: vec![2],
            ..map_ab()
        };
        let c = SbfCampaign {
            gold: gold(),
            records: Vec::new(),
        };
        assert_eq!(derive_dbf(&c, &map), Err(CampaignError::SharedStateUnsupported(1)));
    }

    #[test]
    fn ratios_parse_back() {
        let r = ErrorRates {
            critical: 1,
            detected: 2,
            hang: 3,
            silent: 4,
            denominator: 10,
        };
        let back = ErrorRates::from_ratios(
            &r.ratio(RateLabel::Cer),
            &r.ratio(RateLabel::Der),
            &r.ratio(RateLabel::Her),
            &r.ratio(RateLabel::Ser),
        )
        .unwrap();
        assert_eq!(back, r);
        assert!(ErrorRates::from_ratios("1/10", "2/10", "3/10", "3/10").is_err());
        assert_eq!("DER".parse::<RateLabel>(), Ok(RateLabel::Der));
    }
}
