use hardline_core::measure::{BlockExecutor, BlockStats, Sequential};
use rayon::prelude::*;
use rayon::ThreadPool;

/// Runs Monte Carlo blocks on a dedicated rayon pool. Results are collected
/// in block order, so estimates do not depend on the thread count.
pub struct Rayon {
    pool: ThreadPool,
}

impl Rayon {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BlockExecutor for Rayon {
    fn run(&self, n_blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats> {
        self.pool.install(|| (0..n_blocks).into_par_iter().map(job).collect())
    }
}

/// Sequential for one worker, a rayon pool otherwise.
pub fn executor(workers: usize) -> Result<Box<dyn BlockExecutor>, rayon::ThreadPoolBuildError> {
    if workers <= 1 {
        Ok(Box::new(Sequential))
    } else {
        Ok(Box::new(Rayon::new(workers)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let job = |k: usize| BlockStats { n: k as u64, ..BlockStats::default() };
        let par = Rayon::new(4).unwrap().run(1000, &job);
        assert_eq!(par, Sequential.run(1000, &job));
    }
}
