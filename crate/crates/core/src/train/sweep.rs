use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::graph::{make_splits, GraphDataset, SplitFractions, SplitMasks};
use crate::metrics::{ate_error, pehe, qini};
use crate::synth::{generate, SynthConfig};

use super::{train, TrainConfig, TrainError};

/// A CSV table whose rows start with a job key.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub header: String,
    pub rows: Vec<String>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", self.header);
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

/// Run `f` for every job on a pool of `workers` threads. Each finished row
/// `key,value` is appended to `resume` right away; on a rerun, jobs whose key
/// already has a row there are skipped. The final table (and file) lists rows
/// in job order.
pub fn run_jobs<J: Sync>(
    header: &str,
    jobs: &[(String, J)],
    workers: usize,
    resume: Option<&Path>,
    f: impl Fn(&J) -> Result<String, TrainError> + Sync,
) -> Result<SweepTable, TrainError> {
    let mut done: HashMap<String, String> = HashMap::new();
    if let Some(path) = resume.filter(|p| p.exists()) {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next().is_some_and(|h| h != header) {
            return Err(TrainError::Config(format!("{} has a different header; refusing to resume", path.display())));
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            if let Some((key, _)) = jobs.iter().find(|(k, _)| line.starts_with(&format!("{k},"))) {
                done.insert(key.clone(), line.to_string());
            }
        }
    }
    if let Some(path) = resume {
        if !path.exists() {
            fs::write(path, format!("{header}\n"))?;
        }
    }
    let sink = Mutex::new(match resume {
        Some(p) => Some(OpenOptions::new().append(true).open(p)?),
        None => None,
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("cannot start worker pool: {e}")))?;
    let fresh: Vec<(String, String)> = pool.install(|| {
        jobs.par_iter()
            .filter(|(k, _)| !done.contains_key(k))
            .map(|(k, job)| {
                let line = format!("{k},{}", f(job)?);
                if let Some(file) = sink.lock().expect("sink lock").as_mut() {
                    writeln!(file, "{line}")?;
                    file.flush()?;
                }
                log::info!("finished {k}");
                Ok((k.clone(), line))
            })
            .collect::<Result<_, TrainError>>()
    })?;
    done.extend(fresh);
    let table = SweepTable { header: header.to_string(), rows: jobs.iter().map(|(k, _)| done[k].clone()).collect() };
    if let Some(path) = resume {
        fs::write(path, table.to_csv())?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScarcityRow {
    pub fraction: f64,
    pub seed: u64,
    pub estimator: String,
    pub qini: f64,
}

/// Train every configuration at every labeled fraction and seed, scoring the
/// Qini coefficient on the fixed test nodes of `masks`. The label mask and
/// the training seed of a row are both its `seed`.
pub fn scarcity_sweep(
    dataset: &GraphDataset,
    masks: &SplitMasks,
    configs: &[TrainConfig],
    fractions: &[f64],
    seeds: &[u64],
    workers: usize,
    resume: Option<&Path>,
) -> Result<(SweepTable, Vec<ScarcityRow>), TrainError> {
    let mut jobs = Vec::new();
    for &fraction in fractions {
        for &seed in seeds {
            for cfg in configs {
                let name = label(cfg);
                jobs.push((format!("{fraction},{seed},{name}"), (fraction, seed, cfg)));
            }
        }
    }
    let test = masks.test_indices();
    let table = run_jobs("fraction,seed,estimator,qini", &jobs, workers, resume, |&(fraction, seed, cfg)| {
        let m = masks.mask_labels(fraction, seed)?;
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let model = train(dataset, &m, &cfg)?.model;
        let tau = model.predict(dataset)?;
        let pick = |i: &usize| tau[*i];
        let q = qini(
            &test.iter().map(pick).collect::<Vec<_>>(),
            &test.iter().map(|&i| dataset.treatment()[i]).collect::<Vec<_>>(),
            &test.iter().map(|&i| dataset.outcome_obs()[i]).collect::<Vec<_>>(),
            100,
        )?;
        Ok(format!("{q:.10e}"))
    })?;
    let rows = table
        .rows
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Ok(ScarcityRow {
                fraction: parse(f[0])?,
                seed: parse(f[1])?,
                estimator: f[2].to_string(),
                qini: parse(f[3])?,
            })
        })
        .collect::<Result<_, TrainError>>()?;
    Ok((table, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaRow {
    pub kappa2: f64,
    pub seed: u64,
    pub estimator: String,
    pub sqrt_pehe: f64,
    pub ate_error: f64,
}

/// For every κ2 and seed, generate a dataset from `base`, split it with the
/// same seed, train every configuration and score √PEHE and the ATE error on
/// the test nodes.
pub fn kappa_sweep(
    base: &SynthConfig,
    kappas: &[f64],
    configs: &[TrainConfig],
    seeds: &[u64],
    workers: usize,
    resume: Option<&Path>,
) -> Result<(SweepTable, Vec<KappaRow>), TrainError> {
    let mut jobs = Vec::new();
    for &kappa2 in kappas {
        for &seed in seeds {
            for cfg in configs {
                jobs.push((format!("{kappa2},{seed},{}", label(cfg)), (kappa2, seed, cfg)));
            }
        }
    }
    let table =
        run_jobs("kappa2,seed,estimator,sqrt_pehe,ate_error", &jobs, workers, resume, |&(kappa2, seed, cfg)| {
            let (sp, ae) = kappa_point(base, kappa2, seed, cfg)?;
            Ok(format!("{sp:.10e},{ae:.10e}"))
        })?;
    let rows = table
        .rows
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Ok(KappaRow {
                kappa2: parse(f[0])?,
                seed: parse(f[1])?,
                estimator: f[2].to_string(),
                sqrt_pehe: parse(f[3])?,
                ate_error: parse(f[4])?,
            })
        })
        .collect::<Result<_, TrainError>>()?;
    Ok((table, rows))
}

/// Test-node √PEHE and ATE error of one configuration on one generated dataset.
pub(crate) fn kappa_point(
    base: &SynthConfig,
    kappa2: f64,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<(f64, f64), TrainError> {
    let synth = SynthConfig { kappa2, seed, ..base.clone() };
    let dataset = generate(&synth).map_err(|e| TrainError::Config(e.to_string()))?.dataset;
    let masks = make_splits(dataset.n_nodes(), SplitFractions::default(), seed)?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let model = train(&dataset, &masks, &cfg)?.model;
    let tau = model.predict(&dataset)?;
    let truth = dataset.true_uplift().expect("generated data has both potential outcomes");
    let test = masks.test_indices();
    let a: Vec<f64> = test.iter().map(|&i| tau[i]).collect();
    let b: Vec<f64> = test.iter().map(|&i| truth[i]).collect();
    Ok((pehe(&a, &b)?, ate_error(&a, &b)?))
}

/// Row label of a configuration: the estimator, plus the backbone for
/// non-default graph encoders.
fn label(cfg: &TrainConfig) -> String {
    match (cfg.estimator.uses_graph(), cfg.backbone) {
        (true, super::Arch::Gnum) | (false, _) => cfg.estimator.to_string(),
        (true, b) => format!("{}-{b}", cfg.estimator),
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, TrainError> {
    s.trim().parse().map_err(|_| TrainError::Config(format!("malformed sweep cell `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn resume_skips_finished_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let jobs: Vec<(String, u32)> = (0..4).map(|i| (format!("j{i}"), i)).collect();
        let calls = AtomicUsize::new(0);
        let run = |n: usize| {
            run_jobs("key,value", &jobs[..n], 2, Some(&path), |&j| {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok((j * j).to_string())
            })
            .unwrap()
        };
        run(2);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        let table = run(4);
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        assert_eq!(table.rows, vec!["j0,0", "j1,1", "j2,4", "j3,9"]);
        assert_eq!(fs::read_to_string(&path).unwrap(), table.to_csv());
    }

    #[test]
    fn header_mismatch_refuses_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "other\n").unwrap();
        let jobs = vec![("a".to_string(), ())];
        assert!(run_jobs("key,value", &jobs, 1, Some(&path), |_| Ok("1".into())).is_err());
    }
}
