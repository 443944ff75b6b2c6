//! Fixtures shared by the benchmarks.

use tvfl_core::experiment::{init_network, uplink_channel, Preset};
use tvfl_core::nn::SplitNet;
use tvfl_core::scenario::{generate_dataset, Dataset, ScenarioConfig};
use tvfl_core::trainer::{Batch, StaleCache};

/// A dataset of `samples` rows, all of them in the training split but one.
pub fn dataset(num_su: usize, samples: usize) -> Dataset {
    let mut c = ScenarioConfig::with_num_su(num_su);
    c.num_samples = samples;
    c.train_count = samples - 1;
    generate_dataset(&c).expect("valid bench scenario")
}

pub fn network(preset: &Preset, ds: &Dataset, local_hidden: usize) -> SplitNet {
    init_network(preset.spec(ds.num_su(), local_hidden, true), ds, 1).expect("valid preset")
}

/// The full training split as one batch, plus a cache warmed by it.
pub fn full_batch(net: &SplitNet, ds: &Dataset) -> (Batch, StaleCache) {
    let rows = ds.train_indices();
    let batch = Batch::from_dataset(ds, &rows, rows.clone());
    let mut cache = StaleCache::new(ds.num_su(), rows.len(), net.spec.local_output_dim());
    for k in 0..ds.num_su() {
        let p = net.locals[k].predict(&batch.features[k]).expect("widths match");
        cache.store(k, &rows, &p, 0).expect("rows in range");
    }
    (batch, cache)
}

pub fn channel(num_su: usize) -> tvfl_core::channel::ChannelConfig {
    uplink_channel(num_su)
}
