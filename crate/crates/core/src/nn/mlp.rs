use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::gemm::gemm;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// `ln(1 + exp(beta * z)) / beta`
    Softplus(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        self.with_derivative(z).0
    }

    /// Value and slope at `z`, sharing one exponential.
    fn with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (z, 1.0),
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Softplus(beta) => {
                let bz = beta * z;
                let e = (-bz.abs()).exp();
                let slope = if bz >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (bz.max(0.0) / beta + ln_1p_unit(e) / beta, slope)
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                (s, s * (1.0 - s))
            }
        }
    }
}

/// `ln(1 + x)` for `x` in `[0, 1]`, accurate to a few ulps and cheaper
/// than the library routine.
fn ln_1p_unit(x: f64) -> f64 {
    let u = 1.0 + x;
    if u == 1.0 {
        x
    } else {
        u.ln() * x / (u - 1.0)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shape of a multilayer perceptron: `depth` hidden layers of width
/// `hidden`, then a linear output layer. With `skip = Some(s)` the network
/// input is concatenated to the input of hidden layer `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub depth: usize,
    pub output: usize,
    pub skip: Option<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    fn layer_inputs(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        for l in 0..=self.depth {
            let base = if l == 0 { self.input } else { self.hidden };
            dims.push(if l > 0 && self.skip == Some(l) { base + self.input } else { base });
        }
        dims
    }

    fn layer_outputs(&self) -> Vec<usize> {
        (0..=self.depth).map(|l| if l == self.depth { self.output } else { self.hidden }).collect()
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        self.layer_inputs().iter().zip(self.layer_outputs()).map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Offset of the row-major `inputs x outputs` weight block.
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations recorded by a batched forward pass, consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct Tape {
    rows: usize,
    /// Network input, `rows x input`.
    input: Vec<f64>,
    /// Per layer: its input matrix and the activation slope at its
    /// pre-activation.
    layer_inputs: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl Mlp {
    /// A network with every parameter zero.
    pub fn new(spec: MlpSpec) -> Result<Self, NnError> {
        if let Some(s) = spec.skip {
            if s == 0 || s >= spec.depth {
                return Err(NnError::InvalidSpec(format!("skip layer {s} must be in 1..{}", spec.depth)));
            }
        }
        if spec.input == 0 || spec.output == 0 || (spec.depth > 0 && spec.hidden == 0) {
            return Err(NnError::InvalidSpec("zero-width layer".into()));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in spec.layer_inputs().into_iter().zip(spec.layer_outputs()) {
            layers.push(Layer { inputs, outputs, weights: offset, bias: offset + inputs * outputs });
            offset += inputs * outputs + outputs;
        }
        Ok(Self { spec, layers, params: vec![0.0; offset] })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
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

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::DimensionMismatch { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init_xavier(&mut self, rng: &mut impl Rng) {
        for layer in self.layers.clone() {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in self.weights_mut(&layer) {
                *w = rng.random_range(-bound..bound);
            }
            self.bias_mut(&layer).fill(0.0);
        }
    }

    /// Zeroes the output layer so the network starts as the constant zero map.
    pub fn zero_output_layer(&mut self) {
        let last = *self.layers.last().expect("at least one layer");
        self.params[last.weights..last.bias + last.outputs].fill(0.0);
    }

    /// Geometric initialization: output 0 approximates the signed distance
    /// to a sphere of `radius` about the origin (negated when `inward`, so
    /// the field is positive inside). Only the first `raw_inputs` input
    /// columns (the un-encoded coordinates) drive the initial field; other
    /// outputs get Xavier weights.
    pub fn init_geometric(&mut self, rng: &mut impl Rng, radius: f64, inward: bool, raw_inputs: usize) {
        self.init_xavier(rng);
        let hidden = self.spec.hidden;
        let depth = self.spec.depth;
        for (l, layer) in self.layers.clone().into_iter().enumerate().take(depth) {
            let normal = Normal::new(0.0, 2f64.sqrt() / (layer.outputs as f64).sqrt()).expect("valid std");
            let skip_here = l > 0 && self.spec.skip == Some(l);
            let w = self.weights_mut(&layer);
            for (idx, x) in w.iter_mut().enumerate() {
                let row = idx / layer.outputs;
                let encoded = if l == 0 {
                    row >= raw_inputs
                } else {
                    skip_here && row >= hidden + raw_inputs
                };
                *x = if encoded { 0.0 } else { normal.sample(rng) };
            }
            self.bias_mut(&layer).fill(0.0);
        }
        let last = self.layers[depth];
        let mean = std::f64::consts::PI.sqrt() / (last.inputs as f64).sqrt();
        let normal = Normal::new(mean, 1e-4).expect("valid std");
        let sign = if inward { -1.0 } else { 1.0 };
        for row in 0..last.inputs {
            self.params[last.weights + row * last.outputs] = sign * normal.sample(rng);
        }
        self.params[last.bias] = -sign * radius;
        self.calibrate_sphere(radius, sign, raw_inputs);
    }

    /// Least-squares fit of output 0 against `|p|` on shells, then an affine
    /// correction of the output layer so the zero level sits at `radius`
    /// with unit slope.
    fn calibrate_sphere(&mut self, radius: f64, sign: f64, raw_inputs: usize) {
        let mut inputs = Vec::new();
        let mut radii = Vec::new();
        let dirs = fibonacci_directions(64);
        for shell in 1..=8 {
            let r = shell as f64 / 8.0;
            for d in &dirs {
                let mut row = vec![0.0; self.spec.input];
                for c in 0..raw_inputs.min(3) {
                    row[c] = d[c] * r;
                }
                inputs.extend(row);
                radii.push(r);
            }
        }
        let out = self.forward_batch(&inputs, radii.len());
        let stride = self.spec.output;
        let ys: Vec<f64> = (0..radii.len()).map(|i| out[i * stride]).collect();
        let n = radii.len() as f64;
        let mx = radii.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = radii.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = radii.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        if !(slope.abs() > 1e-6) {
            return;
        }
        let intercept = my - slope * mx;
        let scale = sign / slope;
        let last = self.layers[self.spec.depth];
        for row in 0..last.inputs {
            self.params[last.weights + row * last.outputs] *= scale;
        }
        self.params[last.bias] = (self.params[last.bias] - intercept) * scale - sign * radius;
    }

    fn weights_mut(&mut self, layer: &Layer) -> &mut [f64] {
        &mut self.params[layer.weights..layer.bias]
    }

    fn bias_mut(&mut self, layer: &Layer) -> &mut [f64] {
        &mut self.params[layer.bias..layer.bias + layer.outputs]
    }

    /// Single-input evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.spec.input {
            return Err(NnError::DimensionMismatch { expected: self.spec.input, got: input.len() });
        }
        Ok(self.forward_batch(input, 1))
    }

    /// Evaluates `rows` inputs stored row-major; no tape is recorded.
    pub fn forward_batch(&self, input: &[f64], rows: usize) -> Vec<f64> {
        self.run(input.to_vec(), rows, None)
    }

    /// Evaluates and records a tape for [`Mlp::backward`].
    pub fn forward_taped(&self, input: Vec<f64>, rows: usize) -> (Vec<f64>, Tape) {
        let mut tape = Tape { rows, input: Vec::new(), layer_inputs: Vec::new(), slopes: Vec::new() };
        let out = self.run(input, rows, Some(&mut tape));
        (out, tape)
    }

    fn run(&self, input: Vec<f64>, rows: usize, mut tape: Option<&mut Tape>) -> Vec<f64> {
        assert_eq!(input.len(), rows * self.spec.input, "input must be rows x {}", self.spec.input);
        let mut h = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l > 0 && self.spec.skip == Some(l) { concat_columns(&h, &input, rows) } else { h };
            let mut z = vec![0.0; rows * layer.outputs];
            let bias = &self.params[layer.bias..layer.bias + layer.outputs];
            for row in z.chunks_mut(layer.outputs) {
                row.copy_from_slice(bias);
            }
            gemm(rows, layer.inputs, layer.outputs, &x, false, &self.params[layer.weights..layer.bias], false, 1.0, &mut z);
            let act = if l == self.spec.depth { self.spec.output_activation } else { self.spec.hidden_activation };
            if let Some(t) = tape.as_deref_mut() {
                let mut slope = z;
                let a: Vec<f64> = slope
                    .iter_mut()
                    .map(|v| {
                        let (value, d) = act.with_derivative(*v);
                        *v = d;
                        value
                    })
                    .collect();
                t.layer_inputs.push(x);
                t.slopes.push(slope);
                h = a;
            } else {
                h = z.iter().map(|&v| act.apply(v)).collect();
            }
        }
        if let Some(t) = tape {
            t.input = input;
        }
        h
    }

    /// Back-propagates `grad_output` (`rows x output`), accumulating parameter
    /// gradients into `grads` and returning the gradient w.r.t. the input.
    /// The tape is consumed, so it cannot be replayed.
    pub fn backward(&self, tape: Tape, grad_output: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let rows = tape.rows;
        assert_eq!(grad_output.len(), rows * self.spec.output, "output gradient shape");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer shape");
        let mut grad_input = vec![0.0; rows * self.spec.input];
        let mut g: Vec<f64> = grad_output
            .iter()
            .zip(&tape.slopes[self.spec.depth])
            .map(|(go, d)| go * d)
            .collect();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let x = &tape.layer_inputs[l];
            {
                let (gw, gb) = grads[layer.weights..layer.bias + layer.outputs].split_at_mut(layer.inputs * layer.outputs);
                gemm(layer.inputs, rows, layer.outputs, x, true, &g, false, 1.0, gw);
                for row in g.chunks(layer.outputs) {
                    for (b, v) in gb.iter_mut().zip(row) {
                        *b += v;
                    }
                }
            }
            let mut dx = vec![0.0; rows * layer.inputs];
            gemm(rows, layer.outputs, layer.inputs, &g, false, &self.params[layer.weights..layer.bias], true, 0.0, &mut dx);
            if l == 0 {
                for (gi, d) in grad_input.iter_mut().zip(&dx) {
                    *gi += d;
                }
                break;
            }
            let dh = if self.spec.skip == Some(l) {
                let hidden = self.spec.hidden;
                let mut dh = Vec::with_capacity(rows * hidden);
                for (r, row) in dx.chunks(layer.inputs).enumerate() {
                    dh.extend_from_slice(&row[..hidden]);
                    for (gi, d) in grad_input[r * self.spec.input..(r + 1) * self.spec.input].iter_mut().zip(&row[hidden..]) {
                        *gi += d;
                    }
                }
                dh
            } else {
                dx
            };
            g = dh.iter().zip(&tape.slopes[l - 1]).map(|(d, s)| d * s).collect();
        }
        grad_input
    }
}

fn concat_columns(a: &[f64], b: &[f64], rows: usize) -> Vec<f64> {
    let (ca, cb) = (a.len() / rows, b.len() / rows);
    let mut out = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        out.extend_from_slice(&a[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b[r * cb..(r + 1) * cb]);
    }
    out
}

fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(input: usize, hidden: usize, depth: usize, output: usize, skip: Option<usize>) -> MlpSpec {
        MlpSpec {
            input,
            hidden,
            depth,
            output,
            skip,
            hidden_activation: Activation::Softplus(100.0),
            output_activation: Activation::Identity,
        }
    }

    #[test]
    fn param_count_closed_form() {
        let s = spec(39, 256, 8, 257, Some(4));
        // 39*256 + 6 * 256*256 + (256+39)*256 + 256*257, plus biases
        let expect = 39 * 256 + 256 + 6 * (256 * 256 + 256) + (295 * 256 + 256) + (256 * 257 + 257);
        assert_eq!(s.param_count(), expect);
        assert_eq!(Mlp::new(s).unwrap().param_count(), expect);
    }

    #[test]
    fn zero_output_layer_yields_bias() {
        let mut net = Mlp::new(spec(3, 8, 2, 2, None)).unwrap();
        net.init_xavier(&mut ChaCha8Rng::seed_from_u64(1));
        net.zero_output_layer();
        let n = net.params.len();
        net.params[n - 2] = 0.25;
        net.params[n - 1] = -1.5;
        assert_eq!(net.forward(&[0.3, -0.7, 2.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_network() {
        let mut s = spec(3, 0, 0, 3, None);
        s.output_activation = Activation::Identity;
        let mut net = Mlp::new(s).unwrap();
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        net.set_params(p).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(matches!(net.forward(&[1.0]), Err(NnError::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn deterministic_forward() {
        let make = || {
            let mut net = Mlp::new(spec(5, 16, 4, 3, Some(2))).unwrap();
            net.init_xavier(&mut ChaCha8Rng::seed_from_u64(42));
            net
        };
        let x = [0.1, 0.2, -0.3, 0.4, 0.9];
        let a = make().forward(&x).unwrap();
        let b = make().forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_skip_rejected() {
        assert!(Mlp::new(spec(3, 4, 2, 1, Some(2))).is_err());
        assert!(Mlp::new(spec(3, 4, 2, 1, Some(0))).is_err());
    }

    #[test]
    fn geometric_init_approximates_sphere() {
        for inward in [false, true] {
            let mut net = Mlp::new(spec(3, 64, 4, 1, Some(2))).unwrap();
            net.init_geometric(&mut ChaCha8Rng::seed_from_u64(5), 0.5, inward, 3);
            let sign = if inward { -1.0 } else { 1.0 };
            let dirs = fibonacci_directions(40);
            let at = |d: &[f64; 3], r: f64| net.forward(&[d[0] * r, d[1] * r, d[2] * r]).unwrap()[0];
            for d in &dirs {
                assert!(sign * (at(d, 0.8) - at(d, 0.2)) > 0.0);
            }
            for r in [0.2, 0.8] {
                let mean = dirs.iter().map(|d| at(d, r)).sum::<f64>() / dirs.len() as f64;
                assert!((mean - sign * (r - 0.5)).abs() < 0.05, "r {r} -> mean {mean}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        let sp = Activation::Softplus(100.0);
        assert!((sp.apply(10.0) - 10.0).abs() < 1e-12);
        assert!(sp.apply(-10.0) >= 0.0 && sp.apply(-10.0) < 1e-300);
        assert!((sp.apply(0.0) - 2f64.ln() / 100.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) == 0.0 && sigmoid(800.0) == 1.0);
        for bz in [-60.0, -37.5, -20.0, -1.0, -1e-9, 0.0, 1e-9, 0.5, 20.0, 36.9, 37.1, 60.0] {
            let z = bz / 100.0;
            let reference = (f64::max(bz, 0.0) + (-f64::abs(bz)).exp().ln_1p()) / 100.0;
            let (value, slope) = sp.with_derivative(z);
            assert!((value - reference).abs() <= 4.0 * f64::EPSILON * reference.abs(), "{bz}: {value} vs {reference}");
            assert!((slope - sigmoid(bz)).abs() <= 2.0 * f64::EPSILON, "{bz}");
        }
    }

    /// Loss `0.5 * |out|^2` summed over rows.
    fn half_square(net: &Mlp, x: &[f64], rows: usize) -> f64 {
        net.forward_batch(x, rows).iter().map(|v| 0.5 * v * v).sum()
    }

    fn check_gradients(net: &mut Mlp, rows: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * net.spec.input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (out, tape) = net.forward_taped(x.clone(), rows);
        let mut grads = vec![0.0; net.param_count()];
        let gin = net.backward(tape, &out, &mut grads);
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs().max(b.abs()).max(1e-6));
        for _ in 0..20 {
            let i = rng.random_range(0..net.param_count());
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = half_square(net, &x, rows);
            net.params[i] = orig - h;
            let down = half_square(net, &x, rows);
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(rel(fd, grads[i]) < 1e-4, "param {i}: fd {fd} vs {}", grads[i]);
        }
        for i in 0..x.len().min(10) {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (half_square(net, &xp, rows) - half_square(net, &xm, rows)) / (2.0 * h);
            assert!(rel(fd, gin[i]) < 1e-4, "input {i}: fd {fd} vs {}", gin[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shapes = [
            (spec(39, 16, 4, 9, Some(2)), Activation::Identity),
            (spec(21, 16, 4, 1, Some(2)), Activation::Identity),
            (spec(21, 16, 3, 8, None), Activation::Identity),
            (
                MlpSpec { hidden_activation: Activation::Relu, ..spec(36, 16, 2, 3, None) },
                Activation::Sigmoid,
            ),
        ];
        for (seed, (s, out)) in shapes.into_iter().enumerate() {
            let mut net = Mlp::new(MlpSpec { output_activation: out, ..s }).unwrap();
            net.init_xavier(&mut ChaCha8Rng::seed_from_u64(seed as u64));
            check_gradients(&mut net, 3, 100 + seed as u64);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut net = Mlp::new(spec(4, 8, 3, 2, Some(1))).unwrap();
        net.init_xavier(&mut ChaCha8Rng::seed_from_u64(2));
        let (_, tape) = net.forward_taped(vec![0.3; 8], 2);
        let mut grads = vec![0.0; net.param_count()];
        let gin = net.backward(tape, &[0.0; 4], &mut grads);
        assert!(grads.iter().chain(&gin).all(|&g| g == 0.0));
    }

    #[test]
    fn backward_passes_accumulate() {
        let mut net = Mlp::new(spec(4, 8, 3, 2, Some(1))).unwrap();
        net.init_xavier(&mut ChaCha8Rng::seed_from_u64(3));
        let xa = vec![0.1, -0.2, 0.3, 0.4];
        let xb = vec![-0.5, 0.6, 0.1, 0.0];
        let single = |x: &[f64], g: &[f64]| {
            let (_, tape) = net.forward_taped(x.to_vec(), 1);
            let mut grads = vec![0.0; net.param_count()];
            net.backward(tape, g, &mut grads);
            grads
        };
        let ga = single(&xa, &[1.0, -2.0]);
        let gb = single(&xb, &[0.5, 0.25]);
        let mut both = vec![0.0; net.param_count()];
        let (_, t) = net.forward_taped(xa.clone(), 1);
        net.backward(t, &[1.0, -2.0], &mut both);
        let (_, t) = net.forward_taped(xb.clone(), 1);
        net.backward(t, &[0.5, 0.25], &mut both);
        for i in 0..both.len() {
            assert!((both[i] - ga[i] - gb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_networks_have_moderate_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut geo = Mlp::new(spec(39, 32, 4, 9, Some(2))).unwrap();
        geo.init_geometric(&mut rng, 0.5, false, 3);
        let mut xav = Mlp::new(spec(39, 32, 3, 8, None)).unwrap();
        xav.init_xavier(&mut rng);
        for net in [&geo, &xav] {
            let rows = 200;
            let x: Vec<f64> = (0..rows * 39).map(|_| rng.random_range(-0.57..0.57)).collect();
            let out = net.forward_batch(&x, rows);
            assert!(out.iter().all(|v| v.is_finite()));
            let mean = out.iter().map(|v| v.abs()).sum::<f64>() / out.len() as f64;
            assert!(mean > 1e-4 && mean < 10.0, "{mean}");
        }
    }

    #[test]
    fn adam_descends_on_regression() {
        use crate::nn::{AdamConfig, AdamState};
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Mlp::new(spec(3, 16, 2, 1, None)).unwrap();
        net.init_xavier(&mut rng);
        let rows = 64;
        let x: Vec<f64> = (0..rows * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.chunks(3).map(|p| (p[0] * 2.0).sin() + p[1] * p[2]).collect();
        let loss = |net: &Mlp| {
            net.forward_batch(&x, rows).iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / rows as f64
        };
        let initial = loss(&net);
        let mut adam = AdamState::new(net.param_count(), AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() });
        for _ in 0..200 {
            let (out, tape) = net.forward_taped(x.clone(), rows);
            let g: Vec<f64> = out.iter().zip(&y).map(|(a, b)| 2.0 * (a - b) / rows as f64).collect();
            let mut grads = vec![0.0; net.param_count()];
            net.backward(tape, &g, &mut grads);
            adam.step(&mut [net.params_mut()], &[&grads]).unwrap();
        }
        assert!(loss(&net) < initial);
    }
}
