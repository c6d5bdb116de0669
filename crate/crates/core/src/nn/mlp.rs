use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [100, 50, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected network with tanh hidden layers and a configurable head.
///
/// Parameters live in one flat vector: for each layer the weight matrix
/// (row-major, `out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

/// Layer outputs from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn zeros(in_dim: usize, hidden: &[usize], out_dim: usize, output: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(in_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        Self::from_sizes(sizes, output)
    }

    pub fn from_sizes(sizes: Vec<usize>, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("network needs at least input and output layers of nonzero width"));
        }
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self { sizes, output, params: vec![0.0; n] })
    }

    /// Orthogonal initialization: each weight matrix has orthonormal rows or
    /// columns scaled by the gain; biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        output: Activation,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(in_dim, hidden, out_dim, output)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (rows, cols) = (net.sizes[l + 1], net.sizes[l]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(rows, cols, rng);
            let off = net.layer_offset(l);
            for (dst, src) in net.params[off..off + rows * cols].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes.windows(2).take(layer).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Weight and bias slices of `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(layer);
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let p = &self.params[off..off + o * (i + 1)];
        p.split_at(o * i)
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(layer);
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let p = &mut self.params[off..off + o * (i + 1)];
        p.split_at_mut(o * i)
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<Cache> {
        let mut cache = Cache::default();
        self.forward_into(x, &mut cache)?;
        Ok(cache)
    }

    /// Forward pass reusing the buffers of `cache`.
    pub fn forward_into(&self, x: &[f64], cache: &mut Cache) -> Result<()> {
        check_len(self.in_dim(), x.len())?;
        let layers = self.num_layers();
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + o * i];
            let b = &self.params[off + o * i..off + o * (i + 1)];
            off += o * (i + 1);
            let act = self.activation(l);
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            out.extend(w.chunks_exact(i).zip(b).map(|(row, &bias)| act.apply(bias + dot(row, input))));
        }
        Ok(())
    }

    /// Reverse pass: accumulates dL/dparams into `grad` and returns dL/dx.
    pub fn backward(&self, cache: &Cache, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        let layers = self.num_layers();
        if cache.acts.len() != layers + 1
            || cache.acts.iter().zip(&self.sizes).any(|(a, &s)| a.len() != s)
        {
            return Err(invalid("stale cache: shapes do not match this network"));
        }
        check_len(self.out_dim(), upstream.len())?;
        check_len(self.params.len(), grad.len())?;

        let mut delta: Vec<f64> = Vec::with_capacity(*self.sizes.iter().max().unwrap());
        let mut next: Vec<f64> = Vec::with_capacity(delta.capacity());
        delta.extend(upstream.iter().zip(&cache.acts[layers]).map(|(&g, &y)| g * self.output.slope_from_output(y)));
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let input = &cache.acts[l];
            let (gw, gb) = grad[off..off + o * (i + 1)].split_at_mut(o * i);
            for ((grow, gbias), &d) in gw.chunks_exact_mut(i).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                if d != 0.0 {
                    for (g, &x) in grow.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let w = &self.params[off..off + o * i];
            next.clear();
            next.resize(i, 0.0);
            for (row, &d) in w.chunks_exact(i).zip(&delta) {
                if d != 0.0 {
                    for (n, &wv) in next.iter_mut().zip(row) {
                        *n += d * wv;
                    }
                }
            }
            if l > 0 {
                for (n, &y) in next.iter_mut().zip(input) {
                    *n *= 1.0 - y * y;
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        Ok(delta)
    }

    /// Forward-mode derivative of the output along a parameter direction.
    pub fn jvp(&self, cache: &Cache, direction: &[f64]) -> Result<Vec<f64>> {
        check_len(self.params.len(), direction.len())?;
        let layers = self.num_layers();
        if cache.acts.len() != layers + 1 {
            return Err(invalid("stale cache: shapes do not match this network"));
        }
        let mut tangent = vec![0.0; self.in_dim()];
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + o * i];
            let dw = &direction[off..off + o * i];
            let db = &direction[off + o * i..off + o * (i + 1)];
            off += o * (i + 1);
            let input = &cache.acts[l];
            let out = &cache.acts[l + 1];
            let act = self.activation(l);
            tangent = (0..o)
                .map(|r| {
                    let dz = db[r]
                        + dot(&dw[r * i..(r + 1) * i], input)
                        + dot(&w[r * i..(r + 1) * i], &tangent);
                    dz * act.slope_from_output(out[r])
                })
                .collect();
        }
        Ok(tangent)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Random `rows x cols` matrix (row-major) with orthonormal rows when
/// `rows <= cols`, orthonormal columns otherwise.
pub fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for (k, b) in basis.iter().enumerate() {
        for (j, &x) in b.iter().enumerate() {
            if rows <= cols {
                m[k * cols + j] = x;
            } else {
                m[j * cols + k] = x;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, output: Activation) -> Mlp {
        let in_dim = rng.random_range(1..6);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..7)).collect();
        let out = rng.random_range(1..4);
        let mut net = Mlp::zeros(in_dim, &hidden, out, output).unwrap();
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        net
    }

    #[test]
    fn zero_params_give_zero_output() {
        let net = Mlp::zeros(9, &DEFAULT_HIDDEN, 1, Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[0.3; 9]).unwrap(), vec![0.0]);
        assert_eq!(net.param_count(), 9 * 100 + 100 + 100 * 50 + 50 + 50 * 25 + 25 + 25 + 1);
    }

    #[test]
    fn linear_head_passes_bias() {
        let mut net = Mlp::zeros(9, &DEFAULT_HIDDEN, 1, Activation::Linear).unwrap();
        let last = net.num_layers() - 1;
        net.layer_mut(last).1[0] = 0.7;
        assert_eq!(net.forward(&[1.0; 9]).unwrap(), vec![0.7]);
    }

    #[test]
    fn dimension_errors() {
        let net = Mlp::zeros(3, &[4], 2, Activation::Tanh).unwrap();
        assert!(matches!(net.forward(&[0.0; 2]), Err(Error::DimensionMismatch { expected: 3, got: 2 })));
        let other = Mlp::zeros(2, &[4], 2, Activation::Tanh).unwrap();
        let cache = other.forward_cached(&[0.0; 2]).unwrap();
        let mut g = vec![0.0; net.param_count()];
        assert!(net.backward(&cache, &[0.0; 2], &mut g).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = random_net(&mut rng, Activation::Tanh);
        let x: Vec<f64> = (0..net.in_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward_cached(&x).unwrap();
        let mut g = vec![0.0; net.param_count()];
        let gx = net.backward(&cache, &vec![0.0; net.out_dim()], &mut g).unwrap();
        assert!(g.iter().chain(&gx).all(|&v| v == 0.0));
    }

    #[test]
    fn jvp_matches_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let net = random_net(&mut rng, Activation::Tanh);
            let x: Vec<f64> = (0..net.in_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..net.out_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cache = net.forward_cached(&x).unwrap();
            let jv = net.jvp(&cache, &v).unwrap();
            let mut g = vec![0.0; net.param_count()];
            net.backward(&cache, &u, &mut g).unwrap();
            let lhs = dot(&u, &jv);
            let rhs = dot(&g, &v);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn orthogonal_rows_and_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(3, 7), (7, 3), (5, 5)] {
            let m = orthogonal_matrix(r, c, &mut rng);
            let (n, stride_fn): (usize, Box<dyn Fn(usize, usize) -> f64>) = if r <= c {
                (r, Box::new(|a, j| m[a * c + j]))
            } else {
                (c, Box::new(|a, j| m[j * c + a]))
            };
            let len = r.max(c);
            for a in 0..n {
                for b in 0..n {
                    let d: f64 = (0..len).map(|j| stride_fn(a, j) * stride_fn(b, j)).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }
}
