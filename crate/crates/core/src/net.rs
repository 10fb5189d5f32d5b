//! Dense tanh networks with exact backpropagation and a JSON weight format.
//!
//! Parameters live in one flat vector so that optimisers, gradient
//! clipping and finite-difference checks can treat them uniformly. Layer
//! `l` stores its `out × in` weight matrix row-major, followed by its `out`
//! biases.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Probability distribution over the outputs.
    Softmax,
    /// Raw linear output.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every network parameter,
/// laid out like [`DenseNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `acts[0]` is the input; `acts[l]` the tanh output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Output of the last affine layer, before the head.
    pub raw: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Log-softmax via the log-sum-exp trick.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

impl DenseNet {
    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must have at least two non-zero entries, got {sizes:?}"
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            head,
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Orthogonal weights (scaled by `hidden_gain`, or `head_gain` on the
    /// last layer) and zero biases.
    pub fn orthogonal(
        sizes: &[usize],
        head: Head,
        hidden_gain: f64,
        head_gain: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, head)?;
        let layers = net.layer_count();
        for l in 0..layers {
            let (rows, cols) = (net.sizes[l + 1], net.sizes[l]);
            let gain = if l + 1 == layers { head_gain } else { hidden_gain };
            let m = orthogonal_matrix(rows, cols, rng);
            let off = net.weight_offset(l);
            for (dst, v) in net.params[off..off + rows * cols].iter_mut().zip(m) {
                *dst = gain * v;
            }
        }
        Ok(net)
    }

    /// 7 → 64 → 64 → 121 softmax policy with the usual PPO gains.
    pub fn policy(input: usize, actions: usize, rng: &mut impl Rng) -> Self {
        Self::orthogonal(
            &[input, HIDDEN, HIDDEN, actions],
            Head::Softmax,
            std::f64::consts::SQRT_2,
            0.01,
            rng,
        )
        .expect("static sizes are valid")
    }

    /// 7 → 64 → 64 → 1 state-value network.
    pub fn value(input: usize, rng: &mut impl Rng) -> Self {
        Self::orthogonal(
            &[input, HIDDEN, HIDDEN, 1],
            Head::Identity,
            std::f64::consts::SQRT_2,
            1.0,
            rng,
        )
        .expect("static sizes are valid")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn weight_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    fn layer_slices(&self, layer: usize) -> (&[f64], &[f64]) {
        let off = self.weight_offset(layer);
        let (rows, cols) = (self.sizes[layer + 1], self.sizes[layer]);
        let w = &self.params[off..off + rows * cols];
        let b = &self.params[off + rows * cols..off + rows * cols + rows];
        (w, b)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if let Some(i) = input.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "input {i} is not finite: {}",
                input[i]
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every activation for [`DenseNet::backward_raw`].
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let layers = self.layer_count();
        let mut acts = Vec::with_capacity(layers);
        acts.push(input.to_vec());
        let mut raw = Vec::new();
        for l in 0..layers {
            let (w, b) = self.layer_slices(l);
            let x = &acts[l];
            let cols = x.len();
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * cols..(o + 1) * cols];
                *zo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 == layers {
                raw = z;
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
                acts.push(z);
            }
        }
        Ok(ForwardTrace { acts, raw })
    }

    /// Output before the head (logits for a softmax head).
    pub fn forward_raw(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.raw)
    }

    /// Network output after the head.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let raw = self.forward_raw(input)?;
        Ok(match self.head {
            Head::Softmax => softmax(&raw),
            Head::Identity => raw,
        })
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// gradient with respect to the pre-head output is `raw_grad`.
    pub fn backward_raw(&self, trace: &ForwardTrace, raw_grad: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(raw_grad.len(), self.output_dim());
        let mut delta = raw_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (w, _) = self.layer_slices(l);
            let x = &trace.acts[l];
            let (rows, cols) = (self.sizes[l + 1], self.sizes[l]);
            let off = self.weight_offset(l);
            let (gw, rest) = grad[off..].split_at_mut(rows * cols);
            let gb = &mut rest[..rows];
            for o in 0..rows {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, xi) in gw[o * cols..(o + 1) * cols].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; cols];
                for o in 0..rows {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, wi) in prev.iter_mut().zip(&w[o * cols..(o + 1) * cols]) {
                            *p += d * wi;
                        }
                    }
                }
                // tanh' = 1 − tanh²
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    /// Parameter gradient of a loss whose gradient with respect to the
    /// network output (after the head) is `output_grad`.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradient> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "output gradient has {} entries, network has {} outputs",
                output_grad.len(),
                self.output_dim()
            )));
        }
        let trace = self.forward_trace(input)?;
        let raw_grad = match self.head {
            Head::Identity => output_grad.to_vec(),
            Head::Softmax => {
                // ∂p_j/∂z_i = p_j (δ_ij − p_i)
                let p = softmax(&trace.raw);
                let dot: f64 = p.iter().zip(output_grad).map(|(a, b)| a * b).sum();
                p.iter()
                    .zip(output_grad)
                    .map(|(pi, gi)| pi * (gi - dot))
                    .collect()
            }
        };
        let mut grad = vec![0.0; self.params.len()];
        self.backward_raw(&trace, &raw_grad, &mut grad);
        Ok(Gradient(grad))
    }

    pub fn save_weights(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_weights_json()?;
        std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
    }

    pub fn load_weights(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_weights_json(&text).map_err(|e| e.in_file(path))
    }

    /// Serialises to the versioned JSON envelope, one weight row per line,
    /// every number with 17 significant digits.
    pub fn to_weights_json(&self) -> Result<String> {
        if let Some(i) = self.params.iter().position(|v| !v.is_finite()) {
            return Err(Error::WeightFormat {
                context: format!("parameter {i}"),
                message: "cannot serialise a non-finite value".into(),
            });
        }
        let num = |v: f64| format!("{v:.16e}");
        let list = |vals: &[f64]| vals.iter().map(|&v| num(v)).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let head = serde_json::to_string(&self.head)?;
        let sizes = self
            .sizes
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(s, "{{");
        let _ = writeln!(s, "  \"format_version\": {FORMAT_VERSION},");
        let _ = writeln!(s, "  \"activation\": \"tanh\",");
        let _ = writeln!(s, "  \"head\": {head},");
        let _ = writeln!(s, "  \"layer_sizes\": [{sizes}],");
        let _ = writeln!(s, "  \"layers\": [");
        for l in 0..self.layer_count() {
            let (w, b) = self.layer_slices(l);
            let cols = self.sizes[l];
            let _ = writeln!(s, "    {{");
            let _ = writeln!(s, "      \"weights\": [");
            let rows: Vec<String> = w
                .chunks(cols)
                .map(|row| format!("        [{}]", list(row)))
                .collect();
            let _ = writeln!(s, "{}", rows.join(",\n"));
            let _ = writeln!(s, "      ],");
            let _ = writeln!(s, "      \"biases\": [{}]", list(b));
            let sep = if l + 1 == self.layer_count() { "" } else { "," };
            let _ = writeln!(s, "    }}{sep}");
        }
        let _ = writeln!(s, "  ]");
        let _ = writeln!(s, "}}");
        Ok(s)
    }

    pub fn from_weights_json(text: &str) -> Result<Self> {
        let malformed = |context: &str, message: String| Error::WeightFormat {
            context: context.into(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| malformed("document", e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| malformed("format_version", "missing or not an integer".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let file: WeightFile =
            serde_json::from_value(value).map_err(|e| malformed("document", e.to_string()))?;
        if file.activation != "tanh" {
            return Err(malformed(
                "activation",
                format!("unsupported activation {:?}", file.activation),
            ));
        }
        let mut net = Self::zeros(&file.layer_sizes, file.head)
            .map_err(|e| malformed("layer_sizes", e.to_string()))?;
        if file.layers.len() != net.layer_count() {
            return Err(malformed(
                "layers",
                format!(
                    "layer_sizes describe {} layers, found {}",
                    net.layer_count(),
                    file.layers.len()
                ),
            ));
        }
        for (l, layer) in file.layers.iter().enumerate() {
            let ctx = format!("layer {l}");
            let (rows, cols) = (net.sizes[l + 1], net.sizes[l]);
            if layer.weights.len() != rows {
                return Err(malformed(
                    &ctx,
                    format!("expected {rows} weight rows, found {}", layer.weights.len()),
                ));
            }
            if let Some(r) = layer.weights.iter().position(|row| row.len() != cols) {
                return Err(malformed(
                    &ctx,
                    format!(
                        "weight row {r} has {} entries, expected {cols}",
                        layer.weights[r].len()
                    ),
                ));
            }
            if layer.biases.len() != rows {
                return Err(malformed(
                    &ctx,
                    format!("expected {rows} biases, found {}", layer.biases.len()),
                ));
            }
            let off = net.weight_offset(l);
            let flat = layer.weights.iter().flatten().chain(&layer.biases);
            for (dst, v) in net.params[off..off + rows * cols + rows].iter_mut().zip(flat) {
                *dst = *v;
            }
        }
        Ok(net)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    #[allow(dead_code)]
    format_version: u32,
    activation: String,
    head: Head,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

/// Row-major `rows × cols` matrix with orthonormal rows or columns
/// (whichever is fewer), from Gram-Schmidt on a Gaussian matrix.
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    // Orthonormalise `k` vectors of length `n`, then lay them out.
    let (k, n) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

/// Draws an index from `dist`.
pub fn sample_action(dist: &[f64], rng: &mut impl Rng) -> Result<usize> {
    validate_distribution(dist)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u fell in the rounding gap above the cumulative sum
    Ok(dist.iter().rposition(|&p| p > 0.0).expect("validated"))
}

/// Most probable index; ties go to the lowest.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

pub fn validate_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if let Some(i) = dist.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "probability {i} is invalid: {}",
            dist[i]
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_net(sizes: &[usize], head: Head, seed: u64) -> DenseNet {
        let mut r = rng(seed);
        let mut net = DenseNet::zeros(sizes, head).unwrap();
        for p in net.params_mut() {
            *p = r.random_range(-0.5..0.5);
        }
        net
    }

    #[test]
    fn policy_parameter_count() {
        let net = DenseNet::policy(7, 121, &mut rng(0));
        assert_eq!(
            net.param_count(),
            7 * 64 + 64 + 64 * 64 + 64 + 64 * 121 + 121
        );
    }

    #[test]
    fn zero_policy_is_uniform() {
        let net = DenseNet::zeros(&[7, 64, 64, 121], Head::Softmax).unwrap();
        let p = net.forward(&[0.3; 7]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 121.0).abs() < 1e-15));
        let v = DenseNet::zeros(&[7, 64, 64, 1], Head::Identity).unwrap();
        assert_eq!(v.forward(&[1.0; 7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn non_finite_input_rejected() {
        let net = DenseNet::zeros(&[7, 4, 2], Head::Identity).unwrap();
        let mut x = [0.0; 7];
        x[3] = f64::NAN;
        assert!(matches!(net.forward(&x), Err(Error::InvalidArgument(_))));
        assert!(net.forward(&[0.0; 6]).is_err());
    }

    #[test]
    fn softmax_properties() {
        let net = random_net(&[7, 64, 64, 121], Head::Softmax, 4);
        let p = net.forward(&[0.1, -0.2, 0.9, 0.3, -0.4, 0.5, 2.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let z: Vec<f64> = (0..121).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let shifted: Vec<f64> = z.iter().map(|v| v + 1000.0).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_pure() {
        let net = random_net(&[7, 64, 64, 121], Head::Softmax, 5);
        let x = [0.5, 0.1, -0.3, 0.2, 0.0, 0.7, 3.0];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let m = orthogonal_matrix(64, 7, &mut rng(1));
        for a in 0..7 {
            for b in 0..7 {
                let dot: f64 = (0..64).map(|r| m[r * 7 + a] * m[r * 7 + b]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
        let m = orthogonal_matrix(1, 64, &mut rng(2));
        assert!((m.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradient() {
        let net = random_net(&[7, 8, 8, 5], Head::Softmax, 6);
        let g = net.backward(&[0.2; 7], &[0.0; 5]).unwrap();
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_output_grad() {
        let net = random_net(&[7, 16, 16, 5], Head::Softmax, 7);
        let x = [0.2, -0.1, 0.5, 0.3, -0.3, 0.8, 1.5];
        let g = [0.3, -1.0, 0.2, 0.7, -0.1];
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = net.backward(&x, &g).unwrap();
        let b = net.backward(&x, &g2).unwrap();
        for (p, q) in a.0.iter().zip(&b.0) {
            assert!((2.0 * p - q).abs() <= 1e-15 * q.abs().max(1.0));
        }
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let net = random_net(&[7, 4, 3], Head::Identity, 8);
        assert!(net.backward(&[0.0; 7], &[1.0; 2]).is_err());
    }

    #[test]
    fn one_hot_and_uniform_sampling() {
        let mut r = rng(3);
        let mut d = vec![0.0; 121];
        d[42] = 1.0;
        for _ in 0..1000 {
            assert_eq!(sample_action(&d, &mut r).unwrap(), 42);
        }
        assert!(sample_action(&[0.5, 0.4], &mut r).is_err());
        assert!(sample_action(&[1.5, -0.5], &mut r).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut r = rng(9);
        let d = vec![1.0 / 121.0; 121];
        let n = 1_000_000usize;
        let mut counts = vec![0usize; 121];
        for _ in 0..n {
            counts[sample_action(&d, &mut r).unwrap()] += 1;
        }
        let p = 1.0 / 121.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = softmax(&(0..121).map(|i| (i as f64).cos()).collect::<Vec<_>>());
        let draw = |seed| {
            let mut r = rng(seed);
            (0..50).map(|_| sample_action(&d, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn weights_round_trip_bit_exact() {
        let net = DenseNet::policy(7, 121, &mut rng(10));
        let text = net.to_weights_json().unwrap();
        let back = DenseNet::from_weights_json(&text).unwrap();
        assert_eq!(back.sizes(), net.sizes());
        assert!(back
            .params()
            .iter()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.to_weights_json().unwrap(), text);
    }

    #[test]
    fn truncated_and_versioned_files() {
        let net = DenseNet::value(7, &mut rng(11));
        let text = net.to_weights_json().unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            DenseNet::from_weights_json(truncated),
            Err(Error::WeightFormat { .. })
        ));
        let v2 = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            DenseNet::from_weights_json(&v2),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = DenseNet::zeros(&[2, 3, 1], Head::Identity).unwrap();
        let text = net.to_weights_json().unwrap();
        let bad = text.replace("\"layer_sizes\": [2, 3, 1]", "\"layer_sizes\": [2, 4, 1]");
        let err = DenseNet::from_weights_json(&bad).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
    }
}
