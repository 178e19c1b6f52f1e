//! Skewed federated partitioning.
//!
//! Client 0 is the unlearning client. It receives `⌊α · n_skewed⌋` samples of
//! the skewed class; the rest of that class is dealt round-robin to the
//! remaining clients. Non-skewed classes are then split so that (a) every
//! client ends with an equal total (±1 from rounding) and (b) each client's
//! non-skewed draw is spread proportionally across the majority classes.
//! Every original sample lands in exactly one shard.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Index of the client whose contribution is later unlearned.
pub const UNLEARNING_CLIENT: usize = 0;

/// How to split a dataset across clients with one hoarded class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Total number of clients, unlearning client included (`M + 1 ≥ 2`).
    pub client_count: usize,
    /// The class the unlearning client hoards.
    pub skewed_class: usize,
    /// Fraction of all skewed-class samples held by the unlearning client.
    pub alpha: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, dataset: &LabeledDataset) -> Result<()> {
        if self.client_count < 2 {
            return Err(Error::Validation(format!(
                "client_count must be at least 2, got {}",
                self.client_count
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie strictly inside (0, 1), got {}",
                self.alpha
            )));
        }
        if self.skewed_class >= dataset.class_count() {
            return Err(Error::Validation(format!(
                "skewed_class {} exceeds class count {}",
                self.skewed_class,
                dataset.class_count()
            )));
        }
        for (class, &count) in dataset.class_counts().iter().enumerate() {
            if count < self.client_count {
                return Err(Error::Partition(format!(
                    "class {class} has {count} samples, fewer than {} clients",
                    self.client_count
                )));
            }
        }
        Ok(())
    }
}

/// One client's local dataset plus bookkeeping.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    pub data: LabeledDataset,
    /// True for rows synthesized during recovery; all false at partition time.
    pub generated_mask: Vec<bool>,
}

impl ClientShard {
    pub fn new(client_id: usize, data: LabeledDataset) -> Self {
        let generated_mask = vec![false; data.len()];
        Self {
            client_id,
            data,
            generated_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Samples of this shard carrying the given class.
    pub fn class_count_of(&self, class: usize) -> usize {
        self.data.labels().iter().filter(|&&l| l == class).count()
    }
}

/// Audit record: which original rows each client received, grouped by class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub client_count: usize,
    pub skewed_class: usize,
    pub alpha: f64,
    pub seed: u64,
    pub class_count: usize,
    pub clients: Vec<ClientAssignment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientAssignment {
    pub client_id: usize,
    pub total: usize,
    /// `per_class_indices[c]` lists the original dataset rows of class `c`
    /// assigned to this client, ascending.
    pub per_class_indices: Vec<Vec<usize>>,
}

/// Partitions `dataset` per `spec`; see the module docs for the layout rules.
pub fn partition_skewed(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    Ok(partition_with_manifest(dataset, spec)?.0)
}

/// Like [`partition_skewed`], also returning the audit manifest.
pub fn partition_with_manifest(
    dataset: &LabeledDataset,
    spec: &PartitionSpec,
) -> Result<(Vec<ClientShard>, PartitionManifest)> {
    spec.validate(dataset)?;
    let clients = spec.client_count;
    let class_count = dataset.class_count();
    let total = dataset.len();
    let mut rng = rng_from(spec.seed);

    // Seeded shuffle within each class.
    let mut by_class: Vec<Vec<usize>> = (0..class_count)
        .map(|c| dataset.indices_of_class(c))
        .collect();
    for class_rows in &mut by_class {
        class_rows.shuffle(&mut rng);
    }

    // assignment[client][class] -> original rows.
    let mut assignment: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); class_count]; clients];

    // Skewed class: ⌊α·n⌋ to the unlearning client, the rest dealt
    // round-robin over the remaining clients so counts differ by ≤ 1.
    let skewed_rows = &by_class[spec.skewed_class];
    let hoard = ((spec.alpha * skewed_rows.len() as f64).floor() as usize).min(skewed_rows.len());
    assignment[UNLEARNING_CLIENT][spec.skewed_class].extend_from_slice(&skewed_rows[..hoard]);
    for (i, &row) in skewed_rows[hoard..].iter().enumerate() {
        let client = 1 + (i % (clients - 1));
        assignment[client][spec.skewed_class].push(row);
    }

    // Equal totals: the first `total % clients` clients get one extra.
    let base = total / clients;
    let extra = total % clients;
    let mut needs: Vec<usize> = (0..clients)
        .map(|c| {
            let target = base + usize::from(c < extra);
            let skewed_held = assignment[c][spec.skewed_class].len();
            if skewed_held > target {
                return usize::MAX; // sentinel, checked below
            }
            target - skewed_held
        })
        .collect();
    if let Some(client) = needs.iter().position(|&n| n == usize::MAX) {
        return Err(Error::Partition(format!(
            "client {client} holds more skewed-class samples ({}) than the equal \
             per-client total ({base}); alpha {} is too extreme for equal totals",
            assignment[client][spec.skewed_class].len(),
            spec.alpha
        )));
    }

    // Deal each majority class proportionally to the clients' remaining
    // needs (largest-remainder rounding), so draws stay even across classes
    // and client totals come out exact.
    for class in (0..class_count).filter(|&c| c != spec.skewed_class) {
        let rows = &by_class[class];
        let remaining_total: usize = needs.iter().sum();
        debug_assert!(remaining_total >= rows.len());
        let mut shares: Vec<usize> = needs
            .iter()
            .map(|&need| need * rows.len() / remaining_total)
            .collect();
        let assigned: usize = shares.iter().sum();
        let mut leftovers: Vec<(usize, usize)> = needs
            .iter()
            .enumerate()
            .map(|(c, &need)| (c, (need * rows.len()) % remaining_total))
            .collect();
        // Largest fractional remainder first; ties go to the lower client id.
        leftovers.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut bumps = rows.len() - assigned;
        for (client, _) in leftovers {
            if bumps == 0 {
                break;
            }
            if shares[client] < needs[client] {
                shares[client] += 1;
                bumps -= 1;
            }
        }
        debug_assert_eq!(shares.iter().sum::<usize>(), rows.len());

        let mut cursor = 0;
        for (client, &share) in shares.iter().enumerate() {
            assignment[client][class].extend_from_slice(&rows[cursor..cursor + share]);
            cursor += share;
            needs[client] -= share;
        }
    }
    debug_assert!(needs.iter().all(|&n| n == 0));

    // Materialize shards from ascending original row indices.
    let mut shards = Vec::with_capacity(clients);
    let mut manifest_clients = Vec::with_capacity(clients);
    for (client_id, classes) in assignment.into_iter().enumerate() {
        let mut per_class_indices: Vec<Vec<usize>> = classes;
        for rows in &mut per_class_indices {
            rows.sort_unstable();
        }
        let mut all_rows: Vec<usize> = per_class_indices.iter().flatten().copied().collect();
        all_rows.sort_unstable();
        let shard_data = dataset.select(&all_rows)?;
        manifest_clients.push(ClientAssignment {
            client_id,
            total: all_rows.len(),
            per_class_indices,
        });
        shards.push(ClientShard::new(client_id, shard_data));
    }

    let manifest = PartitionManifest {
        client_count: clients,
        skewed_class: spec.skewed_class,
        alpha: spec.alpha,
        seed: spec.seed,
        class_count,
        clients: manifest_clients,
    };
    Ok((shards, manifest))
}
