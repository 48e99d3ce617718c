//! Synthetic trials for desk-scale runs.
//!
//! Base gait is a ≈1 Hz + ≈2 Hz sinusoid pair per channel plus Gaussian noise
//! (σ = 0.1 m/s²). Inside an episode the gait amplitude is halved and a 6 Hz
//! tremor-band component appears on an axis that depends on the event type.
//! Defog and Tdcsfog use different amplitude and sensor-tilt profiles.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    write_metadata, write_subjects, write_time_series, DataLayout, Domain, Labels, Medication, Sex, Split, Subject,
    TimeSeries, TrialMetadata,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, stable_hash};

const NOISE_SIGMA: f64 = 0.1;
const EPISODE_DAMPING: f64 = 0.5;
const TREMOR_HZ: f64 = 6.0;
const TREMOR_AMPLITUDE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeKind {
    StartHesitation,
    Turn,
    Walking,
    /// Event without a type; only valid for Notype trials.
    Untyped,
}

impl EpisodeKind {
    fn label_index(self) -> Option<usize> {
        match self {
            EpisodeKind::StartHesitation => Some(0),
            EpisodeKind::Turn => Some(1),
            EpisodeKind::Walking => Some(2),
            EpisodeKind::Untyped => None,
        }
    }

    /// Channel carrying the tremor component.
    fn tremor_axis(self) -> usize {
        self.label_index().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub kind: EpisodeKind,
    pub start_s: f64,
    pub len_s: f64,
}

struct Profile {
    offset: [f64; 3],
    gait_scale: f64,
}

fn profile(domain: Domain) -> Profile {
    match domain {
        Domain::Defog | Domain::Notype => Profile {
            offset: [9.5, 0.3, -2.0],
            gait_scale: 1.0,
        },
        Domain::Tdcsfog => Profile {
            offset: [9.7, -0.6, 1.6],
            gait_scale: 1.8,
        },
    }
}

const GAIT_AMPLITUDE: [[f64; 2]; 3] = [[1.2, 0.6], [0.6, 0.3], [0.9, 0.45]];

/// Ten hex characters, like the competition's trial ids.
pub fn synthetic_trial_id(seed: u64, domain: Domain) -> String {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(domain.as_str().as_bytes());
    format!("{:010x}", stable_hash(&key) & 0xff_ffff_ffff)
}

fn check_episodes(domain: Domain, duration_s: f64, episodes: &[Episode]) -> Result<Vec<Episode>> {
    let mut sorted = episodes.to_vec();
    for e in &sorted {
        if !(e.len_s > 0.0) || e.start_s < 0.0 || e.start_s + e.len_s > duration_s + 1e-9 {
            return Err(Error::validation(format!(
                "episode at {}s (len {}s) outside [0, {duration_s}]",
                e.start_s, e.len_s
            )));
        }
        if e.kind == EpisodeKind::Untyped && domain.is_typed() {
            return Err(Error::validation(format!("untyped episode is not valid for {domain}")));
        }
    }
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for w in sorted.windows(2) {
        if w[0].start_s + w[0].len_s > w[1].start_s + 1e-12 {
            return Err(Error::validation(format!(
                "episodes overlap: [{}, {}) and [{}, {})",
                w[0].start_s,
                w[0].start_s + w[0].len_s,
                w[1].start_s,
                w[1].start_s + w[1].len_s
            )));
        }
    }
    Ok(sorted)
}

/// Generates one trial in the domain's file units (g for Defog/Notype,
/// m/s² for Tdcsfog), so it goes through the same harmonization as real
/// files. Deterministic in `seed`.
pub fn generate_trial(seed: u64, domain: Domain, duration_s: f64, episodes: &[Episode]) -> Result<TimeSeries> {
    if !(duration_s > 0.0) {
        return Err(Error::validation("duration must be positive"));
    }
    let episodes = check_episodes(domain, duration_s, episodes)?;
    let rate = domain.sample_rate_hz();
    let t_len = (duration_s * rate).round() as usize;
    if t_len == 0 {
        return Err(Error::validation("duration shorter than one sample"));
    }

    let mut rng = seeded(seed);
    let prof = profile(domain);
    let f1 = rng.random_range(0.9..1.1);
    let f2 = 2.0 * f1 * rng.random_range(0.95..1.05);
    let amp_jitter: f64 = rng.random_range(0.85..1.15);
    let mut phase = [[0.0f64; 2]; 3];
    let mut offset = [0.0f64; 3];
    let tilt = Normal::new(0.0, 0.2).expect("valid sigma");
    for c in 0..3 {
        phase[c] = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        offset[c] = prof.offset[c] + tilt.sample(&mut rng);
    }

    // Per-sample episode index, if any.
    let mut active: Vec<Option<usize>> = vec![None; t_len];
    let mut tremor_phase = Vec::with_capacity(episodes.len());
    for (k, e) in episodes.iter().enumerate() {
        let start = ((e.start_s * rate).round() as usize).min(t_len);
        let end = (((e.start_s + e.len_s) * rate).round() as usize).min(t_len);
        for slot in &mut active[start..end] {
            *slot = Some(k);
        }
        tremor_phase.push(rng.random_range(0.0..TAU));
    }

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut ch = [Vec::with_capacity(t_len), Vec::with_capacity(t_len), Vec::with_capacity(t_len)];
    let scale = domain.unit_scale();
    for i in 0..t_len {
        let t = i as f64 / rate;
        for c in 0..3 {
            let amp = GAIT_AMPLITUDE[c];
            let mut gait = amp[0] * (TAU * f1 * t + phase[c][0]).sin() + amp[1] * (TAU * f2 * t + phase[c][1]).sin();
            gait *= prof.gait_scale * amp_jitter;
            let mut x = offset[c];
            match active[i] {
                Some(k) => {
                    x += EPISODE_DAMPING * gait;
                    if episodes[k].kind.tremor_axis() == c {
                        x += TREMOR_AMPLITUDE * (TAU * TREMOR_HZ * t + tremor_phase[k]).sin();
                    }
                }
                None => x += gait,
            }
            x += noise.sample(&mut rng);
            ch[c].push(x / scale);
        }
    }

    let labels = if domain.is_typed() {
        Labels::Typed(
            active
                .iter()
                .map(|a| {
                    let mut row = [0u8; 3];
                    if let Some(idx) = a.and_then(|k| episodes[k].kind.label_index()) {
                        row[idx] = 1;
                    }
                    row
                })
                .collect(),
        )
    } else {
        Labels::Event(active.iter().map(|a| u8::from(a.is_some())).collect())
    };
    let [v, ml, ap] = ch;
    TimeSeries::new(synthetic_trial_id(seed, domain), domain, v, ml, ap, labels)
}

/// Parameters of a whole synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub seed: u64,
    pub n_subjects: usize,
    pub n_defog: usize,
    pub n_tdcsfog: usize,
    pub n_notype: usize,
    pub n_test_defog: usize,
    pub n_test_tdcsfog: usize,
    pub defog_duration_s: f64,
    pub tdcsfog_duration_s: f64,
    pub episodes_per_trial: usize,
}

impl Default for CorpusPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            n_subjects: 8,
            n_defog: 12,
            n_tdcsfog: 12,
            n_notype: 6,
            n_test_defog: 6,
            n_test_tdcsfog: 6,
            defog_duration_s: 20.0,
            tdcsfog_duration_s: 20.0,
            episodes_per_trial: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub plan: CorpusPlan,
    pub train: Vec<TimeSeries>,
    pub test: Vec<TimeSeries>,
    pub metadata: Vec<TrialMetadata>,
    pub subjects: Vec<Subject>,
}

/// One episode per equal-width slot; event types cycle through a seeded
/// permutation so every trial with ≥ 3 episodes carries all three types.
fn plan_episodes(rng: &mut crate::rng::Rng, duration_s: f64, n: usize) -> Vec<Episode> {
    if n == 0 {
        return Vec::new();
    }
    let mut kinds = [EpisodeKind::StartHesitation, EpisodeKind::Turn, EpisodeKind::Walking];
    kinds.shuffle(rng);
    let slot = duration_s / n as f64;
    (0..n)
        .map(|j| {
            let len = slot * rng.random_range(0.25..0.45);
            let start = slot * j as f64 + rng.random_range(0.0..(slot - len));
            Episode {
                kind: kinds[j % 3],
                start_s: start,
                len_s: len,
            }
        })
        .collect()
}

pub fn generate_corpus(plan: &CorpusPlan) -> Result<Corpus> {
    if plan.n_subjects == 0 {
        return Err(Error::validation("corpus needs at least one subject"));
    }
    let mut rng = seeded(derive_seed(plan.seed, 0));
    let subjects: Vec<Subject> = (0..plan.n_subjects)
        .map(|i| {
            let updrs_on = rng.random_range(10.0f64..40.0).round();
            Subject {
                subject_id: format!("{:06x}", stable_hash(format!("{}-{i}", plan.seed).as_bytes()) & 0xff_ffff),
                age: rng.random_range(55.0f64..82.0).round(),
                sex: if rng.random_bool(0.5) { Sex::Male } else { Sex::Female },
                years_since_dx: rng.random_range(1.0f64..20.0).round(),
                updrs_on,
                updrs_off: updrs_on + rng.random_range(5.0f64..20.0).round(),
                nfogq: rng.random_range(0.0f64..28.0).round(),
            }
        })
        .collect();

    let mut stream = 1u64;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut metadata = Vec::new();
    let mut ids = BTreeSet::new();
    let groups = [
        (Split::Train, Domain::Defog, plan.n_defog, plan.defog_duration_s),
        (Split::Train, Domain::Tdcsfog, plan.n_tdcsfog, plan.tdcsfog_duration_s),
        (Split::Train, Domain::Notype, plan.n_notype, plan.defog_duration_s),
        (Split::Test, Domain::Defog, plan.n_test_defog, plan.defog_duration_s),
        (Split::Test, Domain::Tdcsfog, plan.n_test_tdcsfog, plan.tdcsfog_duration_s),
    ];
    for (split, domain, count, duration) in groups {
        for _ in 0..count {
            let trial_seed = derive_seed(plan.seed, stream);
            stream += 1;
            let mut ep_rng = seeded(derive_seed(trial_seed, 1));
            let episodes = plan_episodes(&mut ep_rng, duration, plan.episodes_per_trial);
            let series = generate_trial(trial_seed, domain, duration, &episodes)?;
            if !ids.insert(series.trial_id().to_string()) {
                return Err(Error::integrity(format!("trial id collision {}", series.trial_id())));
            }
            let subject = &subjects[ep_rng.random_range(0..subjects.len())];
            metadata.push(TrialMetadata {
                trial_id: series.trial_id().to_string(),
                subject_id: subject.subject_id.clone(),
                medication: if ep_rng.random_bool(0.5) { Medication::On } else { Medication::Off },
            });
            match split {
                Split::Train => train.push(series),
                Split::Test => test.push(series),
            }
        }
    }
    Ok(Corpus {
        plan: plan.clone(),
        train,
        test,
        metadata,
        subjects,
    })
}

impl Corpus {
    /// Writes the corpus in the competition directory layout plus a
    /// `corpus_plan.json` recording the generating parameters.
    pub fn write(&self, root: &Path) -> Result<()> {
        let layout = DataLayout::new(root);
        for (split, list) in [(Split::Train, &self.train), (Split::Test, &self.test)] {
            for s in list {
                let dir = layout.series_dir(split, s.domain());
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write_time_series(&dir.join(format!("{}.csv", s.trial_id())), s)?;
            }
        }
        let domain_of = |id: &str| {
            self.train
                .iter()
                .chain(self.test.iter())
                .find(|s| s.trial_id() == id)
                .map(|s| s.domain())
        };
        let defog: Vec<&TrialMetadata> = self
            .metadata
            .iter()
            .filter(|m| domain_of(&m.trial_id) != Some(Domain::Tdcsfog))
            .collect();
        let tdcs: Vec<&TrialMetadata> = self
            .metadata
            .iter()
            .filter(|m| domain_of(&m.trial_id) == Some(Domain::Tdcsfog))
            .collect();
        write_metadata(&layout.metadata_path(Domain::Defog), defog)?;
        write_metadata(&layout.metadata_path(Domain::Tdcsfog), tdcs)?;
        write_subjects(&layout.subjects_path(), &self.subjects)?;
        let plan_path = root.join("corpus_plan.json");
        std::fs::write(&plan_path, serde_json::to_string_pretty(&self.plan)?).map_err(|e| Error::io(&plan_path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(kind: EpisodeKind, start_s: f64, len_s: f64) -> Episode {
        Episode { kind, start_s, len_s }
    }

    #[test]
    fn deterministic_in_seed() {
        let eps = [ep(EpisodeKind::Turn, 1.0, 2.0)];
        let a = generate_trial(7, Domain::Defog, 5.0, &eps).unwrap();
        let b = generate_trial(7, Domain::Defog, 5.0, &eps).unwrap();
        assert_eq!(a, b);
        let bits = |s: &TimeSeries| s.acc_v().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = generate_trial(8, Domain::Defog, 5.0, &eps).unwrap();
        assert_ne!(a.acc_v(), c.acc_v());
    }

    #[test]
    fn no_episodes_means_no_labels() {
        let s = generate_trial(1, Domain::Defog, 3.0, &[]).unwrap();
        assert!(s.labels().typed().unwrap().iter().all(|r| *r == [0, 0, 0]));
        let n = generate_trial(1, Domain::Notype, 3.0, &[]).unwrap();
        assert!(n.labels().event().unwrap().iter().all(|&e| e == 0));
    }

    #[test]
    fn tdcsfog_length() {
        let s = generate_trial(3, Domain::Tdcsfog, 10.0, &[]).unwrap();
        assert_eq!(s.len(), 1000);
        let d = generate_trial(3, Domain::Defog, 10.0, &[]).unwrap();
        assert_eq!(d.len(), 1240);
    }

    #[test]
    fn overlapping_episodes_rejected() {
        let eps = [ep(EpisodeKind::Turn, 1.0, 2.0), ep(EpisodeKind::Walking, 2.5, 1.0)];
        assert!(matches!(generate_trial(1, Domain::Defog, 10.0, &eps), Err(Error::Validation(_))));
        // touching is fine
        let eps = [ep(EpisodeKind::Turn, 1.0, 2.0), ep(EpisodeKind::Walking, 3.0, 1.0)];
        generate_trial(1, Domain::Defog, 10.0, &eps).unwrap();
    }

    #[test]
    fn episode_outside_duration_rejected() {
        let eps = [ep(EpisodeKind::Turn, 9.0, 2.0)];
        assert!(generate_trial(1, Domain::Defog, 10.0, &eps).is_err());
    }

    #[test]
    fn untyped_episode_only_for_notype() {
        let eps = [ep(EpisodeKind::Untyped, 1.0, 1.0)];
        assert!(generate_trial(1, Domain::Defog, 5.0, &eps).is_err());
        let n = generate_trial(1, Domain::Notype, 5.0, &eps).unwrap();
        assert_eq!(n.labels().event().unwrap().iter().filter(|&&e| e == 1).count(), 124);
    }

    #[test]
    fn label_mass_matches_episode_lengths() {
        let eps = [
            ep(EpisodeKind::StartHesitation, 0.33, 1.17),
            ep(EpisodeKind::Turn, 2.71, 0.93),
            ep(EpisodeKind::Walking, 5.05, 2.49),
        ];
        let s = generate_trial(11, Domain::Defog, 9.0, &eps).unwrap();
        let rows = s.labels().typed().unwrap();
        let total: usize = rows.iter().map(|r| r.iter().map(|&v| v as usize).sum::<usize>()).sum();
        let expected: f64 = eps.iter().map(|e| e.len_s * 124.0).sum();
        assert!((total as f64 - expected).abs() <= eps.len() as f64, "{total} vs {expected}");
        for r in rows {
            assert!(r.iter().map(|&v| v as u32).sum::<u32>() <= 1);
        }
    }

    #[test]
    fn defog_written_in_g() {
        let s = generate_trial(5, Domain::Defog, 2.0, &[]).unwrap();
        let mean: f64 = s.acc_v().iter().sum::<f64>() / s.len() as f64;
        // ≈ 9.5 m/s² offset stored in g
        assert!((mean - 9.5 / 9.81).abs() < 0.1, "{mean}");
    }

    #[test]
    fn corpus_has_unique_ids_and_metadata() {
        let plan = CorpusPlan {
            n_defog: 3,
            n_tdcsfog: 3,
            n_notype: 2,
            n_test_defog: 1,
            n_test_tdcsfog: 1,
            defog_duration_s: 6.0,
            tdcsfog_duration_s: 6.0,
            ..CorpusPlan::default()
        };
        let c = generate_corpus(&plan).unwrap();
        assert_eq!(c.train.len(), 8);
        assert_eq!(c.test.len(), 2);
        assert_eq!(c.metadata.len(), 10);
        for s in c.train.iter().filter(|s| s.domain().is_typed()) {
            let rows = s.labels().typed().unwrap();
            for k in 0..3 {
                assert!(rows.iter().any(|r| r[k] == 1), "class {k} missing in {}", s.trial_id());
            }
        }
    }
}
