//! Federated round engine: local training, FedAvg and evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{sgd_step, Activation, DenseNet, GradientTape, Head, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Physical constants of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// CPU-cycle frequency in Hz.
    pub cpu_freq: f64,
    pub cycles_per_bit: f64,
    /// Effective switched capacitance divided by two.
    pub capacitance_half: f64,
    /// Transmit power in watts.
    pub tx_power: f64,
    pub channel_gain: f64,
    /// Size of one model upload in bits.
    pub model_bits: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            cpu_freq: 1.5e9,
            cycles_per_bit: 20.0,
            capacitance_half: 2e-28,
            tx_power: 0.5,
            channel_gain: 1e-8,
            model_bits: 345_600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub id: ClientId,
    pub train: Dataset,
    pub test: Dataset,
    /// Training data size in bits.
    pub data_bits: f64,
    pub device: DeviceParams,
}

impl ClientProfile {
    pub fn new(
        id: ClientId,
        train: Dataset,
        test: Dataset,
        device: DeviceParams,
        bits_per_sample: f64,
    ) -> Result<Self> {
        let d = &device;
        let fields = [
            ("cpu_freq", d.cpu_freq),
            ("cycles_per_bit", d.cycles_per_bit),
            ("capacitance_half", d.capacitance_half),
            ("tx_power", d.tx_power),
            ("channel_gain", d.channel_gain),
            ("model_bits", d.model_bits),
            ("bits_per_sample", bits_per_sample),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("client {id}: {name} must be positive, got {v}")));
        }
        Ok(Self {
            id,
            data_bits: train.len() as f64 * bits_per_sample,
            train,
            test,
            device,
        })
    }

    /// |D_n|, the number of training samples.
    pub fn sample_count(&self) -> usize {
        self.train.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub params: ParamVector,
    /// Mean batch loss of the final epoch.
    pub loss: f64,
    /// Accuracy of the updated local model on the client's test shard.
    pub test_accuracy: f64,
}

/// Classifier used by clients: relu hidden layers with a softmax head.
pub fn classifier(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<DenseNet> {
    let dims: Vec<usize> = std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(classes))
        .collect();
    DenseNet::seeded(&dims, Activation::Relu, Head::Softmax, seed)
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Fraction of correctly classified samples; an empty dataset scores 0.
pub fn accuracy(net: &DenseNet, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        if argmax(&net.predict(x)?) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean cross-entropy of `net` on `indices` of `data`, accumulating the
/// gradient of that mean into `tape`.
fn batch_loss_and_grad(
    net: &mut DenseNet,
    data: &Dataset,
    indices: &[usize],
    tape: &mut GradientTape,
) -> Result<f64> {
    let mut loss = 0.0;
    for &i in indices {
        let probs = net.forward(&data.features[i])?;
        let y = data.labels[i];
        loss -= probs[y].max(f64::MIN_POSITIVE).ln();
        let mut grad = probs;
        grad[y] -= 1.0;
        net.accumulate_backward_logits(&grad, tape)?;
    }
    let n = indices.len() as f64;
    tape.scale(1.0 / n);
    Ok(loss / n)
}

/// Mini-batch gradient descent on the client's training shard, starting from
/// the global parameters.
pub fn local_train<R: Rng>(
    client: &ClientProfile,
    template: &DenseNet,
    global: &ParamVector,
    config: &LocalTrainConfig,
    rng: &mut R,
) -> Result<LocalUpdate> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("local training needs epochs >= 1 and batch_size >= 1".into()));
    }
    if client.train.is_empty() {
        return Err(Error::Config(format!("client {} has an empty training shard", client.id)));
    }
    let mut net = template.clone();
    net.unflatten(global)?;
    let mut order: Vec<usize> = (0..client.train.len()).collect();
    let mut loss = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let mut tape = GradientTape::zeros(net.param_count());
            batch_losses.push(batch_loss_and_grad(&mut net, &client.train, batch, &mut tape)?);
            sgd_step(&mut net, &tape, config.lr)?;
        }
        loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "local loss diverged on client {} in epoch {epoch}: {loss}",
                client.id
            )));
        }
    }
    Ok(LocalUpdate {
        params: net.flatten(),
        loss,
        test_accuracy: accuracy(&net, &client.test)?,
    })
}

/// Sample-count weighted average of parameter vectors.
pub fn fedavg(updates: &[(ParamVector, f64)]) -> Result<ParamVector> {
    let (first, _) = updates.first().ok_or(Error::NoParticipants)?;
    let len = first.len();
    let mut acc = vec![0.0; len];
    let mut total = 0.0;
    for (params, weight) in updates {
        if params.len() != len {
            return Err(Error::Dimension {
                context: "fedavg update",
                expected: len,
                actual: params.len(),
            });
        }
        if !(*weight > 0.0) {
            return Err(Error::Config(format!("fedavg weight must be positive, got {weight}")));
        }
        for (a, p) in acc.iter_mut().zip(params.as_slice()) {
            *a += weight * p;
        }
        total += weight;
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(ParamVector(acc))
}

/// Unweighted mean of per-client test accuracies, plus the per-client list in
/// the order of `clients`.
pub fn evaluate_global<'a, I>(template: &DenseNet, params: &ParamVector, clients: I) -> Result<(f64, Vec<f64>)>
where
    I: IntoIterator<Item = &'a ClientProfile>,
{
    let mut net = template.clone();
    net.unflatten(params)?;
    let clients: Vec<&ClientProfile> = clients.into_iter().collect();
    let per_client = clients
        .par_iter()
        .map(|c| accuracy(&net, &c.test))
        .collect::<Result<Vec<f64>>>()?;
    let global = if per_client.is_empty() {
        0.0
    } else {
        per_client.iter().sum::<f64>() / per_client.len() as f64
    };
    Ok((global, per_client))
}

/// Global parameters and the accuracy history, one entry per completed round
/// starting with the bootstrap round 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub round: usize,
    pub params: ParamVector,
    pub history: Vec<f64>,
}

impl GlobalModel {
    pub fn bootstrap(params: ParamVector, accuracy: f64) -> Self {
        Self {
            round: 0,
            params,
            history: vec![accuracy],
        }
    }

    pub fn advance(&mut self, params: Option<ParamVector>, accuracy: f64) {
        if let Some(p) = params {
            self.params = p;
        }
        self.round += 1;
        self.history.push(accuracy);
    }

    pub fn accuracy(&self) -> f64 {
        *self.history.last().expect("history always has the bootstrap entry")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn client_from(train: Dataset, test: Dataset) -> ClientProfile {
        ClientProfile::new(ClientId(0), train, test, DeviceParams::default(), 8.0).unwrap()
    }

    #[test]
    fn fedavg_unweighted_mean() {
        let out = fedavg(&[(ParamVector(vec![1.0, 1.0]), 1.0), (ParamVector(vec![3.0, 3.0]), 1.0)]).unwrap();
        assert_eq!(out.0, vec![2.0, 2.0]);
    }

    #[test]
    fn fedavg_weighted() {
        let out = fedavg(&[(ParamVector(vec![1.0]), 100.0), (ParamVector(vec![2.0]), 300.0)]).unwrap();
        assert!((out.0[0] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn fedavg_single_update_is_identity() {
        let p = ParamVector(vec![0.1, -3.0, 7.25]);
        assert_eq!(fedavg(&[(p.clone(), 42.0)]).unwrap(), p);
    }

    #[test]
    fn fedavg_errors() {
        assert!(matches!(fedavg(&[]), Err(Error::NoParticipants)));
        assert!(fedavg(&[(ParamVector(vec![1.0]), 1.0), (ParamVector(vec![1.0, 2.0]), 1.0)]).is_err());
        assert!(fedavg(&[(ParamVector(vec![1.0]), 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn fedavg_is_permutation_invariant_and_bounded(
            rows in prop::collection::vec((prop::collection::vec(-10.0f64..10.0, 4), 1.0f64..500.0), 1..8),
            shift in 0usize..8,
        ) {
            let updates: Vec<(ParamVector, f64)> = rows.iter().map(|(v, w)| (ParamVector(v.clone()), *w)).collect();
            let mut rotated = updates.clone();
            let k = shift % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = fedavg(&updates).unwrap();
            let b = fedavg(&rotated).unwrap();
            for j in 0..4 {
                prop_assert!((a.0[j] - b.0[j]).abs() <= 1e-12 * (1.0 + a.0[j].abs()));
                let lo = rows.iter().map(|(v, _)| v[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|(v, _)| v[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.0[j] >= lo - 1e-12 && a.0[j] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = generate_synthetic(2, 2, 20, 1).unwrap();
        let client = client_from(data.clone(), data);
        let template = classifier(2, &[4], 2, 3).unwrap();
        let w = template.flatten();
        let cfg = LocalTrainConfig { epochs: 3, batch_size: 8, lr: 0.0 };
        let out = local_train(&client, &template, &w, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.params, w);
    }

    #[test]
    fn single_batch_step_matches_finite_differences() {
        let data = generate_synthetic(3, 2, 4, 1).unwrap();
        let client = client_from(data.clone(), data.clone());
        let template = classifier(2, &[5], 3, 8).unwrap();
        let w = template.flatten();
        let lr = 0.05;
        let cfg = LocalTrainConfig { epochs: 1, batch_size: 64, lr };
        let out = local_train(&client, &template, &w, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

        let mean_ce = |params: &[f64]| -> f64 {
            let mut net = template.clone();
            net.set_params(params).unwrap();
            data.features
                .iter()
                .zip(&data.labels)
                .map(|(x, &y)| -net.predict(x).unwrap()[y].ln())
                .sum::<f64>()
                / data.len() as f64
        };
        let h = 1e-5;
        let mut probe = w.0.clone();
        for i in 0..probe.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = mean_ce(&probe);
            probe[i] = orig - h;
            let down = mean_ce(&probe);
            probe[i] = orig;
            let expected_delta = -lr * (up - down) / (2.0 * h);
            let delta = out.params.0[i] - w.0[i];
            assert!((delta - expected_delta).abs() < 1e-4 * lr.max(expected_delta.abs()), "param {i}: {delta} vs {expected_delta}");
        }
    }

    #[test]
    fn separable_shard_trains_well() {
        let train = generate_synthetic(2, 2, 100, 21).unwrap();
        let test = generate_synthetic(2, 2, 50, 22).unwrap();
        let client = client_from(train, test);
        let template = classifier(2, &[8], 2, 5).unwrap();
        let out = local_train(&client, &template, &template.flatten(), &LocalTrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(out.test_accuracy >= 0.9, "{}", out.test_accuracy);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let data = generate_synthetic(2, 2, 20, 1).unwrap();
        let client = client_from(data.clone(), data);
        let template = classifier(2, &[4], 2, 3).unwrap();
        let cfg = LocalTrainConfig { epochs: 5, batch_size: 4, lr: 1e300 };
        let err = local_train(&client, &template, &template.flatten(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn constant_predictor_scores_half() {
        let data = generate_synthetic(2, 2, 10, 1).unwrap();
        let clients = vec![client_from(data.clone(), data.clone()), client_from(data.clone(), data)];
        // zero weights with a bias favouring class 1
        let mut template = DenseNet::zeros(&[2, 2], Activation::Relu, Head::Softmax).unwrap();
        template.set_params(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (global, per) = evaluate_global(&template, &template.flatten(), &clients).unwrap();
        assert_eq!(per, vec![0.5, 0.5]);
        assert_eq!(global, 0.5);
    }

    #[test]
    fn global_accuracy_is_unweighted_mean_of_pooled_results() {
        let clients: Vec<ClientProfile> = (0..3)
            .map(|i| {
                let d = generate_synthetic(2, 2, 5 + 5 * i, 30 + i as u64).unwrap();
                client_from(d.clone(), d)
            })
            .collect();
        let template = classifier(2, &[3], 2, 77).unwrap();
        let (global, per) = evaluate_global(&template, &template.flatten(), &clients).unwrap();
        let brute: Vec<f64> = clients.iter().map(|c| accuracy(&template, &c.test).unwrap()).collect();
        assert_eq!(per, brute);
        assert!((global - brute.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn carrying_over_keeps_accuracy() {
        let mut model = GlobalModel::bootstrap(ParamVector(vec![1.0]), 0.6);
        model.advance(None, model.accuracy());
        assert_eq!(model.params.0, vec![1.0]);
        assert_eq!(model.history, vec![0.6, 0.6]);
        assert_eq!(model.history.len(), model.round + 1);
    }

    #[test]
    fn client_profile_validates_physics() {
        let d = generate_synthetic(2, 2, 3, 1).unwrap();
        let device = DeviceParams {
            tx_power: 0.0,
            ..DeviceParams::default()
        };
        assert!(ClientProfile::new(ClientId(1), d.clone(), d.clone(), device, 8.0).is_err());
        let ok = ClientProfile::new(ClientId(1), d.clone(), d, DeviceParams::default(), 8.0).unwrap();
        assert_eq!(ok.data_bits, 6.0 * 8.0);
    }
}
