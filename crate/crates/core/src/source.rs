//! Pulsed two-pair source, coincidence filtering and event-stream analysis.
//!
//! Event streams from local models and from quantum pipelines share one
//! record type and one analysis path.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lhv::{Bin, SettingsSchedule};
use crate::numerics::c;
use crate::states::{ghz_state, sign_distribution, Alphabet, BellFunctional, Dichotomic, MultiPartyState};

/// One party's detection in one trial. CSV columns follow field order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub trial: u64,
    pub party: usize,
    pub setting: u8,
    pub bin: Bin,
    pub sign: i8,
    pub selected: bool,
}

pub fn write_events_csv<W: Write>(records: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Groups records by trial; every trial must list parties `0..n` in order.
fn trials(records: &[EventRecord]) -> Result<(usize, Vec<&[EventRecord]>)> {
    let groups: Vec<&[EventRecord]> = records.chunk_by(|a, b| a.trial == b.trial).collect();
    let n = groups.first().map_or(0, |g| g.len());
    for g in &groups {
        if g.len() != n || g.iter().enumerate().any(|(k, r)| r.party != k) {
            return Err(Error::Parse(format!(
                "trial {} does not list parties 0..{n} in order",
                g[0].trial
            )));
        }
        if g.iter().any(|r| r.selected != g[0].selected) {
            return Err(Error::Parse(format!("trial {} has mixed selection flags", g[0].trial)));
        }
    }
    Ok((n, groups))
}

/// Pump interferometer delay and detector coincidence window, same units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PumpRepr")]
pub struct PumpConfig {
    delta_t: f64,
    window: f64,
}

#[derive(Deserialize)]
struct PumpRepr {
    delta_t: f64,
    window: f64,
}

impl TryFrom<PumpRepr> for PumpConfig {
    type Error = Error;

    fn try_from(r: PumpRepr) -> Result<Self> {
        PumpConfig::new(r.delta_t, r.window)
    }
}

impl PumpConfig {
    /// Requires `0 < window < delta_t`.
    pub fn new(delta_t: f64, window: f64) -> Result<Self> {
        if !(delta_t.is_finite() && window.is_finite() && window > 0.0 && window < delta_t) {
            return Err(Error::InvalidPumpConfig { delta_t, window });
        }
        Ok(Self { delta_t, window })
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn window(&self) -> f64 {
        self.window
    }
}

/// Two pairs (photons 1,2 and 3,4), each emitted at `t0` or `t1`:
/// `½(|t0t0t0t0⟩ + |t1t1t1t1⟩ + |t0t0t1t1⟩ + |t1t1t0t0⟩)`.
pub fn four_photon_state() -> MultiPartyState {
    let h = c(0.5, 0.0);
    MultiPartyState::from_terms(
        vec![2; 4],
        Alphabet::Epoch,
        &[
            (vec![0, 0, 0, 0], h),
            (vec![1, 1, 1, 1], h),
            (vec![0, 0, 1, 1], h),
            (vec![1, 1, 0, 0], h),
        ],
    )
    .expect("fixed four-photon state")
}

/// Keeps only components where every photon shares one time bin, which a
/// window shorter than the delay resolves. Returns the renormalized state
/// and the kept probability.
pub fn coincidence_filter(state: &MultiPartyState, cfg: &PumpConfig) -> Result<(MultiPartyState, f64)> {
    PumpConfig::new(cfg.delta_t, cfg.window)?;
    let support = state.support();
    let n_support = support.len();
    let kept: Vec<(Vec<usize>, _)> = support
        .into_iter()
        .filter(|(levels, _)| levels.windows(2).all(|w| w[0] == w[1]))
        .collect();
    if kept.len() == n_support {
        return Ok((state.clone(), 1.0));
    }
    let p: f64 = kept.iter().map(|(_, z)| z.norm_sqr()).sum();
    if p == 0.0 {
        return Err(Error::PostselectionEmpty);
    }
    let filtered = MultiPartyState::from_terms(state.dims().to_vec(), state.alphabet(), &kept)?;
    Ok((filtered, p))
}

fn dichotomic_for(setting: u8) -> Dichotomic {
    if setting == 0 {
        Dichotomic::y()
    } else {
        Dichotomic::x()
    }
}

/// Per joint setting, a sampler over sign patterns of `state`.
struct SignSampler {
    patterns: Vec<Vec<Vec<i8>>>,
    pickers: Vec<WeightedIndex<f64>>,
}

impl SignSampler {
    /// Setting 0 measures `σ_y`, setting 1 measures `σ_x`.
    fn new(state: &MultiPartyState) -> Result<Self> {
        let n = state.n_parties();
        let mut patterns = Vec::with_capacity(1 << n);
        let mut pickers = Vec::with_capacity(1 << n);
        for bits in 0..1usize << n {
            let obs: Vec<Dichotomic> = (0..n).map(|k| dichotomic_for(((bits >> (n - 1 - k)) & 1) as u8)).collect();
            let refs: Vec<&Dichotomic> = obs.iter().collect();
            let dist = sign_distribution(state, &refs)?;
            pickers.push(
                WeightedIndex::new(dist.iter().map(|(_, p)| *p)).map_err(|e| Error::InvalidEnsemble(e.to_string()))?,
            );
            patterns.push(dist.into_iter().map(|(s, _)| s).collect());
        }
        Ok(Self { patterns, pickers })
    }

    fn sample<R: Rng + ?Sized>(&self, settings: &[u8], rng: &mut R) -> &[i8] {
        let idx = settings.iter().fold(0usize, |acc, &s| acc * 2 + usize::from(s));
        &self.patterns[idx][self.pickers[idx].sample(rng)]
    }
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Four-party stream from the two-pair source. Each pair draws its emission
/// bin independently; a trial is selected iff all four bins agree. Selected
/// trials carry signs sampled from the filtered state measured with
/// `σ_y` (setting 0) or `σ_x` (setting 1); rejected trials carry fair coin signs.
pub fn source_event_stream(
    cfg: &PumpConfig,
    schedule: &SettingsSchedule,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    if n_trials == 0 {
        return Err(Error::TooSmall {
            what: "trial count",
            min: 1,
            got: 0,
        });
    }
    schedule.validate(4)?;
    let (filtered, _) = coincidence_filter(&four_photon_state(), cfg)?;
    let sampler = SignSampler::new(&filtered)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_trials * 4);
    for trial in 0..n_trials {
        let pair_bins = [rng.random::<bool>(), rng.random::<bool>()].map(|late| if late { Bin::L } else { Bin::S });
        let settings = schedule.draw(4, &mut rng);
        let selected = pair_bins[0] == pair_bins[1];
        let signs: Vec<i8> = if selected {
            sampler.sample(&settings, &mut rng).to_vec()
        } else {
            (0..4).map(|_| random_sign(&mut rng)).collect()
        };
        out.extend((0..4).map(|party| EventRecord {
            trial: trial as u64,
            party,
            setting: settings[party],
            bin: pair_bins[party / 2],
            sign: signs[party],
            selected,
        }));
    }
    Ok(out)
}

/// Fraction of four-party trials in which both photons of each pair share a bin.
pub fn pair_agreement_rate(records: &[EventRecord]) -> Result<f64> {
    let (n, groups) = trials(records)?;
    if n != 4 {
        return Err(Error::LengthMismatch { expected: 4, found: n });
    }
    let agree = groups.iter().filter(|g| g[0].bin == g[1].bin && g[2].bin == g[3].bin).count();
    Ok(agree as f64 / groups.len().max(1) as f64)
}

/// `n`-party stream from the crossed geometry: photon `k` goes short to party
/// `k` or long to party `k+1`, each with probability 1/2, and a trial is
/// selected iff all photons took the same kind of path. Selected trials carry
/// GHZ signs (`σ_y` for setting 0, `σ_x` for setting 1). The recorded bin of
/// party `k` is that of photon `k`.
pub fn quantum_event_stream(
    n: usize,
    schedule: &SettingsSchedule,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    schedule.validate(n)?;
    let sampler = SignSampler::new(&ghz_state(n)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_trials * n);
    for trial in 0..n_trials {
        let bins: Vec<Bin> = (0..n).map(|_| if rng.random::<bool>() { Bin::L } else { Bin::S }).collect();
        let settings = schedule.draw(n, &mut rng);
        let selected = bins.windows(2).all(|w| w[0] == w[1]);
        let signs: Vec<i8> = if selected {
            sampler.sample(&settings, &mut rng).to_vec()
        } else {
            (0..n).map(|_| random_sign(&mut rng)).collect()
        };
        out.extend((0..n).map(|party| EventRecord {
            trial: trial as u64,
            party,
            setting: settings[party],
            bin: bins[party],
            sign: signs[party],
            selected,
        }));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermEstimate {
    pub settings: Vec<u8>,
    pub coeff: f64,
    pub trials: u64,
    pub selected: u64,
    /// Mean sign product over selected trials; `None` if none were selected.
    pub mean: Option<f64>,
    pub std_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamEstimate {
    pub n_parties: usize,
    pub trials: u64,
    pub selected: u64,
    pub selection_rate: f64,
    pub selection_std_err: f64,
    pub terms: Vec<TermEstimate>,
    pub mu_hat: Option<f64>,
    pub mu_std_err: Option<f64>,
}

/// Postselected correlation estimates for every term of `functional`.
pub fn analyze_events(records: &[EventRecord], functional: &BellFunctional) -> Result<StreamEstimate> {
    let (n, groups) = trials(records)?;
    if n != functional.n_parties() {
        return Err(Error::LengthMismatch {
            expected: functional.n_parties(),
            found: n,
        });
    }
    let mut counts = vec![(0u64, 0u64, 0i64); functional.terms().len()];
    let mut selected = 0u64;
    for g in &groups {
        selected += u64::from(g[0].selected);
        let settings: Vec<u8> = g.iter().map(|r| r.setting).collect();
        if let Some(k) = functional.terms().iter().position(|t| t.settings == settings) {
            counts[k].0 += 1;
            if g[0].selected {
                counts[k].1 += 1;
                counts[k].2 += g.iter().map(|r| i64::from(r.sign)).product::<i64>();
            }
        }
    }
    let terms: Vec<TermEstimate> = functional
        .terms()
        .iter()
        .zip(&counts)
        .map(|(t, &(total, sel, sum))| {
            let mean = (sel > 0).then(|| sum as f64 / sel as f64);
            TermEstimate {
                settings: t.settings.clone(),
                coeff: t.coeff,
                trials: total,
                selected: sel,
                mean,
                std_err: mean.map(|m| ((1.0 - m * m).max(0.0) / sel as f64).sqrt()),
            }
        })
        .collect();
    let mu_hat = terms
        .iter()
        .map(|t| t.mean.map(|m| m * t.coeff))
        .sum::<Option<f64>>()
        .map(f64::abs);
    let mu_std_err = terms
        .iter()
        .map(|t| t.std_err.map(|s| (s * t.coeff).powi(2)))
        .sum::<Option<f64>>()
        .map(f64::sqrt);
    let total = groups.len() as u64;
    let rate = selected as f64 / total.max(1) as f64;
    Ok(StreamEstimate {
        n_parties: n,
        trials: total,
        selected,
        selection_rate: rate,
        selection_std_err: (rate * (1.0 - rate) / total.max(1) as f64).sqrt(),
        terms,
        mu_hat,
        mu_std_err,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareTest {
    /// Party whose setting is varied; `None` for the joint test over all settings.
    pub party: Option<usize>,
    /// Settings of the other parties (joint test: empty).
    pub others: Vec<u8>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub trials: u64,
    pub tests: Vec<ChiSquareTest>,
    pub min_p_value: f64,
    /// Family-wise significance level; each test is compared to `alpha / tests.len()`.
    pub alpha: f64,
    pub dependence_detected: bool,
}

/// Chi-square test of independence on a `rows × 2` table of (selected, rejected) counts.
fn chi_square(table: &[[u64; 2]]) -> (f64, usize, f64) {
    let rows: Vec<&[u64; 2]> = table.iter().filter(|r| r[0] + r[1] > 0).collect();
    let col = [0, 1].map(|j| rows.iter().map(|r| r[j]).sum::<u64>());
    let total = (col[0] + col[1]) as f64;
    let live_cols = col.iter().filter(|&&c| c > 0).count();
    if rows.len() < 2 || live_cols < 2 {
        return (0.0, 0, 1.0);
    }
    let stat: f64 = rows
        .iter()
        .flat_map(|r| {
            let row_total = (r[0] + r[1]) as f64;
            (0..2).map(move |j| {
                let expected = row_total * col[j] as f64 / total;
                (r[j] as f64 - expected).powi(2) / expected
            })
        })
        .sum();
    let dof = rows.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (stat, dof, dist.sf(stat))
}

/// Tests whether the selection decision depends on the settings.
///
/// For each party and each configuration of the other parties' settings, a
/// 2×2 test compares selection frequencies for the party's two settings. A
/// joint test compares selection across all setting combinations.
pub fn locality_audit(records: &[EventRecord], alpha: f64) -> Result<LocalityReport> {
    let (n, groups) = trials(records)?;
    let mut by_setting = vec![[0u64; 2]; 1 << n];
    for g in &groups {
        let idx = g.iter().fold(0usize, |acc, r| acc * 2 + usize::from(r.setting & 1));
        by_setting[idx][usize::from(!g[0].selected)] += 1;
    }
    let mut tests = Vec::new();
    for party in 0..n {
        let bit = n - 1 - party;
        for rest in 0..1usize << (n - 1) {
            // insert a zero at `bit` to get the index with this party at setting 0
            let low = rest & ((1 << bit) - 1);
            let base = ((rest >> bit) << (bit + 1)) | low;
            let table = [by_setting[base], by_setting[base | (1 << bit)]];
            let (statistic, dof, p_value) = chi_square(&table);
            let others = (0..n)
                .filter(|&k| k != party)
                .map(|k| ((base >> (n - 1 - k)) & 1) as u8)
                .collect();
            tests.push(ChiSquareTest {
                party: Some(party),
                others,
                statistic,
                dof,
                p_value,
            });
        }
    }
    let (statistic, dof, p_value) = chi_square(&by_setting);
    tests.push(ChiSquareTest {
        party: None,
        others: Vec::new(),
        statistic,
        dof,
        p_value,
    });
    let min_p_value = tests.iter().map(|t| t.p_value).fold(1.0, f64::min);
    let threshold = alpha / tests.len() as f64;
    Ok(LocalityReport {
        trials: groups.len() as u64,
        dependence_detected: min_p_value < threshold,
        tests,
        min_p_value,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhv::{event_stream, table1_model, SelectionRule};
    use crate::states::{mermin_n, yx_settings, MerminForm};
    use approx::assert_abs_diff_eq;

    fn cfg() -> PumpConfig {
        PumpConfig::new(1.0, 0.2).unwrap()
    }

    #[test]
    fn four_photon_amplitudes() {
        let s = four_photon_state();
        let support = s.support();
        assert_eq!(support.len(), 4);
        assert!(support.iter().all(|(_, z)| *z == c(0.5, 0.0)));
        for lbl in ["t0t0t0t0", "t1t1t1t1", "t0t0t1t1", "t1t1t0t0"] {
            assert_eq!(s.vector().amplitude_of(lbl), Some(c(0.5, 0.0)));
        }
        assert_abs_diff_eq!(s.vector().norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pairs_are_time_correlated() {
        // P(parties 1,2 in different bins) = 0
        let s = four_photon_state();
        let p: f64 = s
            .support()
            .iter()
            .filter(|(l, _)| l[0] != l[1])
            .map(|(_, z)| z.norm_sqr())
            .sum();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn filter_keeps_half_and_is_idempotent() {
        let (f, keep) = coincidence_filter(&four_photon_state(), &cfg()).unwrap();
        assert_abs_diff_eq!(keep, 0.5, epsilon = 1e-15);
        let ghz = ghz_state(4).unwrap().with_alphabet(Alphabet::Epoch).unwrap();
        assert!(f.max_abs_diff(&ghz).unwrap() <= 1e-15);
        let (ff, keep2) = coincidence_filter(&f, &cfg()).unwrap();
        assert_eq!(ff, f);
        assert_abs_diff_eq!(keep2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pump_config_validation() {
        assert!(matches!(PumpConfig::new(1.0, 1.0), Err(Error::InvalidPumpConfig { .. })));
        assert!(PumpConfig::new(1.0, 2.0).is_err());
        assert!(PumpConfig::new(1.0, 0.0).is_err());
        assert!(PumpConfig::new(f64::NAN, 0.1).is_err());
        assert!(serde_json::from_str::<PumpConfig>(r#"{"delta_t":1.0,"window":3.0}"#).is_err());
        let ok: PumpConfig = serde_json::from_str(r#"{"delta_t":1.0,"window":0.5}"#).unwrap();
        assert_eq!(ok.window(), 0.5);
    }

    #[test]
    fn filtered_state_violates_four_party_mermin() {
        let (f, _) = coincidence_filter(&four_photon_state(), &cfg()).unwrap();
        let v = mermin_n(&f, &yx_settings(4), MerminForm::Product).unwrap();
        assert_abs_diff_eq!(v, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn source_stream_properties() {
        let ev = source_event_stream(&cfg(), &SettingsSchedule::Uniform, 20_000, 3).unwrap();
        assert_eq!(ev.len(), 80_000);
        assert_eq!(pair_agreement_rate(&ev).unwrap(), 1.0);
        let f = BellFunctional::mermin(4, MerminForm::Product).unwrap();
        let est = analyze_events(&ev, &f).unwrap();
        let sigma = (0.25f64 / 20_000.0).sqrt();
        assert!((est.selection_rate - 0.5).abs() < 4.0 * sigma);
        assert!(source_event_stream(&cfg(), &SettingsSchedule::Uniform, 0, 3).is_err());
        assert_eq!(ev, source_event_stream(&cfg(), &SettingsSchedule::Uniform, 20_000, 3).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let ev = source_event_stream(&cfg(), &SettingsSchedule::Uniform, 50, 9).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial,party,setting,bin,sign,selected\n"));
        assert_eq!(read_events_csv(buf.as_slice()).unwrap(), ev);
    }

    #[test]
    fn table1_stream_matches_exact_values() {
        let ev = event_stream(&table1_model(), SelectionRule::SameBin, &SettingsSchedule::Uniform, 40_000, 11).unwrap();
        let est = analyze_events(&ev, &BellFunctional::mermin3()).unwrap();
        assert_eq!(est.mu_hat, Some(4.0));
        for t in &est.terms {
            let p = t.selected as f64 / t.trials as f64;
            let sigma = (0.25 * 0.75 / t.trials as f64).sqrt();
            assert!((p - 0.25).abs() < 4.0 * sigma, "{p}");
        }
    }

    #[test]
    fn quantum_stream_estimates_four() {
        let sched = SettingsSchedule::Cycle(BellFunctional::mermin3().terms().iter().map(|t| t.settings.clone()).collect());
        let ev = quantum_event_stream(3, &sched, 40_000, 5).unwrap();
        let est = analyze_events(&ev, &BellFunctional::mermin3()).unwrap();
        // GHZ correlators are deterministic for these settings
        assert_eq!(est.mu_hat, Some(4.0));
        let sigma = est.selection_std_err;
        assert!((est.selection_rate - 0.25).abs() < 4.0 * sigma);
    }

    #[test]
    fn audit_flags_table1_but_not_quantum() {
        let lhv = event_stream(&table1_model(), SelectionRule::SameBin, &SettingsSchedule::Uniform, 100_000, 1).unwrap();
        let report = locality_audit(&lhv, 1e-3).unwrap();
        assert!(report.dependence_detected, "{:?}", report.min_p_value);

        let q = quantum_event_stream(3, &SettingsSchedule::Uniform, 100_000, 1).unwrap();
        let report = locality_audit(&q, 1e-3).unwrap();
        assert!(!report.dependence_detected, "{:?}", report.min_p_value);
    }

    #[test]
    fn constant_selection_is_independent() {
        let ev = source_event_stream(&cfg(), &SettingsSchedule::Uniform, 1000, 2)
            .unwrap()
            .into_iter()
            .map(|mut r| {
                r.selected = true;
                r
            })
            .collect::<Vec<_>>();
        let report = locality_audit(&ev, 1e-3).unwrap();
        assert!(report.tests.iter().all(|t| t.p_value == 1.0));
        assert!(!report.dependence_detected);
    }

    #[test]
    fn malformed_streams_are_rejected() {
        let mut ev = source_event_stream(&cfg(), &SettingsSchedule::Uniform, 3, 2).unwrap();
        ev.remove(1);
        assert!(analyze_events(&ev, &BellFunctional::mermin(4, MerminForm::Product).unwrap()).is_err());
    }
}
