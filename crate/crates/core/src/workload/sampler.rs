use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;

use super::{LockMode, LockRequest, ObjectId, Step, StepTimeDist, TxnPlan, ValidationErrors, WorkloadSpec};

/// Precomputed sampling tables for a validated [`WorkloadSpec`].
#[derive(Debug, Clone)]
pub struct WorkloadSampler {
    spec: WorkloadSpec,
    class_pick: WeightedIndex<f64>,
    dbr_pick: Vec<Option<WeightedIndex<f64>>>,
    hot_sizes: Vec<u64>,
}

impl WorkloadSampler {
    pub fn new(spec: &WorkloadSpec) -> Result<Self, ValidationErrors> {
        spec.validate()?;
        let class_pick = WeightedIndex::new(spec.classes.iter().map(|c| c.frequency))
            .map_err(|e| ValidationErrors(vec![format!("class frequencies: {e}")]))?;
        let dbr_pick =
            spec.classes
                .iter()
                .map(|c| {
                    if c.total_locks() == 0 {
                        None
                    } else {
                        WeightedIndex::new(c.k.iter().map(|&k| f64::from(k))).ok()
                    }
                })
                .collect();
        let hot_sizes = spec.dbrs.iter().map(|d| d.hot_set_size()).collect();
        Ok(Self { spec: spec.clone(), class_pick, dbr_pick, hot_sizes })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TxnPlan {
        let class = self.class_pick.sample(rng);
        self.sample_class(class, rng)
    }

    /// A plan for a given class: `k_i` lock steps, DBR drawn in proportion
    /// to `k_ij`, object by the hot-set rule, mode S with probability
    /// `s_ij`, repeated objects redrawn; then the commit step.
    pub fn sample_class<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> TxnPlan {
        let spec = &self.spec.classes[class];
        let k = spec.total_locks() as usize;
        let mut steps = Vec::with_capacity(k + 1);
        let mut taken: Vec<ObjectId> = Vec::with_capacity(k);
        let mut per_dbr = vec![0u64; self.spec.dbrs.len()];
        for _ in 0..k {
            let dbr = self.pick_dbr(class, &per_dbr, rng);
            per_dbr[dbr] += 1;
            let object = loop {
                let candidate = ObjectId { dbr: dbr as u32, index: self.pick_object(dbr, rng) };
                if !taken.contains(&candidate) {
                    break candidate;
                }
            };
            taken.push(object);
            let mode =
                if rng.random::<f64>() < spec.shared_fraction(dbr) { LockMode::Shared } else { LockMode::Exclusive };
            steps.push(Step {
                duration: draw_step(&spec.step_time_dist, rng),
                lock: Some(LockRequest { object, mode }),
            });
        }
        steps.push(Step { duration: draw_step(&spec.step_time_dist, rng), lock: None });
        TxnPlan { class, steps }
    }

    fn pick_dbr<R: Rng + ?Sized>(&self, class: usize, used: &[u64], rng: &mut R) -> usize {
        let weights = &self.spec.classes[class].k;
        let dist = self.dbr_pick[class].as_ref().expect("class with locks has DBR weights");
        let j = dist.sample(rng);
        if used[j] < self.spec.dbrs[j].size {
            return j;
        }
        // A region this plan has exhausted: draw among the rest.
        let open: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|&(j, &k)| k > 0 && used[j] < self.spec.dbrs[j].size)
            .map(|(j, &k)| (j, f64::from(k)))
            .collect();
        let idx = WeightedIndex::new(open.iter().map(|o| o.1))
            .expect("validation guarantees room for k distinct objects")
            .sample(rng);
        open[idx].0
    }

    fn pick_object<R: Rng + ?Sized>(&self, dbr: usize, rng: &mut R) -> u64 {
        let d = &self.spec.dbrs[dbr];
        let Some(skew) = d.skew else {
            return rng.random_range(0..d.size);
        };
        let hot = self.hot_sizes[dbr];
        if hot >= d.size || rng.random::<f64>() < skew.b {
            rng.random_range(0..hot)
        } else {
            rng.random_range(hot..d.size)
        }
    }
}

fn draw_step<R: Rng + ?Sized>(dist: &StepTimeDist, rng: &mut R) -> f64 {
    match dist {
        StepTimeDist::Fixed { mean } => *mean,
        StepTimeDist::Exponential { mean } => {
            if *mean > 0.0 {
                Exp::new(1.0 / mean).expect("positive rate").sample(rng)
            } else {
                0.0
            }
        }
        StepTimeDist::Empirical { values } => values[rng.random_range(0..values.len())],
    }
}

/// One plan from `spec` using `rng`. Builds the sampling tables on every
/// call; hold a [`WorkloadSampler`] when drawing many.
pub fn sample_txn<R: Rng + ?Sized>(spec: &WorkloadSpec, rng: &mut R) -> Result<TxnPlan, ValidationErrors> {
    Ok(WorkloadSampler::new(spec)?.sample(rng))
}
