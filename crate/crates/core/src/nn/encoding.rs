use std::f64::consts::PI;

/// Sinusoidal encoding `[x, sin(2^l pi x), cos(2^l pi x)]` for `l = 0..octaves`.
///
/// Layout for a `d`-dimensional input: the raw `d` values first (when
/// `include_input`), then for each octave `d` sines followed by `d` cosines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SineCosineEncoding {
    pub octaves: usize,
    pub include_input: bool,
}

impl SineCosineEncoding {
    pub fn new(octaves: usize, include_input: bool) -> Self {
        Self { octaves, include_input }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.octaves + usize::from(self.include_input))
    }

    /// Appends the encoding of `x` to `out`.
    pub fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        if self.include_input {
            out.extend_from_slice(x);
        }
        let mut freq = PI;
        for _ in 0..self.octaves {
            out.extend(x.iter().map(|v| (freq * v).sin()));
            out.extend(x.iter().map(|v| (freq * v).cos()));
            freq *= 2.0;
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        self.encode_into(x, &mut out);
        out
    }

    /// Chain rule through the encoding: maps a gradient w.r.t. the encoded
    /// vector back to the raw input.
    pub fn backward(&self, x: &[f64], grad_encoded: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut g = vec![0.0; d];
        let mut offset = 0;
        if self.include_input {
            g.copy_from_slice(&grad_encoded[..d]);
            offset = d;
        }
        let mut freq = PI;
        for _ in 0..self.octaves {
            for i in 0..d {
                g[i] += grad_encoded[offset + i] * freq * (freq * x[i]).cos();
                g[i] -= grad_encoded[offset + d + i] * freq * (freq * x[i]).sin();
            }
            offset += 2 * d;
            freq *= 2.0;
        }
        g
    }
}
