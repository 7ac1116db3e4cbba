//! Small dense networks trained by plain SGD, and the episodic key/value
//! dictionary used by the NEC learners.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"CTFMLPv1";

/// Feedforward network with rectifier hidden layers and a linear output.
///
/// Parameters live in one flat buffer. For each layer: the weight matrix as
/// `fan_in` rows of `fan_out` entries (row-major), then `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut at = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        at += w[0] * w[1] + w[1];
        offsets.push(at);
    }
    offsets
}

/// Dot product with four independent accumulators; fixed summation order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    /// Uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for
    /// weights and biases alike.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Mlp::zeros(dims)?;
        for l in 0..mlp.num_layers() {
            let bound = 1.0 / (dims[l] as f64).sqrt();
            let (start, end) = (mlp.offsets[l], mlp.offsets[l + 1]);
            for p in &mut mlp.params[start..end] {
                *p = rng.gen_range(-bound..=bound);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Domain(format!("invalid layer widths {dims:?}")));
        }
        let offsets = layer_offsets(dims);
        Ok(Mlp {
            dims: dims.to_vec(),
            params: vec![0.0; *offsets.last().unwrap()],
            offsets,
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut mlp = Mlp::zeros(dims)?;
        if params.len() != mlp.params.len() {
            return Err(Error::DimensionMismatch {
                expected: mlp.params.len(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, l: usize) -> &[f64] {
        let start = self.offsets[l];
        &self.params[start..start + self.dims[l] * self.dims[l + 1]]
    }

    fn biases(&self, l: usize) -> &[f64] {
        let start = self.offsets[l] + self.dims[l] * self.dims[l + 1];
        &self.params[start..self.offsets[l + 1]]
    }

    /// Weight from input unit `i` to output unit `o` of layer `l`.
    pub fn weight(&self, l: usize, i: usize, o: usize) -> f64 {
        self.weights(l)[i * self.dims[l + 1] + o]
    }

    pub fn set_weight(&mut self, l: usize, i: usize, o: usize, v: f64) {
        let idx = self.offsets[l] + i * self.dims[l + 1] + o;
        self.params[idx] = v;
    }

    pub fn bias(&self, l: usize, o: usize) -> f64 {
        self.biases(l)[o]
    }

    pub fn set_bias(&mut self, l: usize, o: usize, v: f64) {
        let idx = self.offsets[l] + self.dims[l] * self.dims[l + 1] + o;
        self.params[idx] = v;
    }

    fn layer_forward(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let fan_out = self.dims[l + 1];
        let w = self.weights(l);
        out.clear();
        out.extend_from_slice(self.biases(l));
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w[i * fan_out..(i + 1) * fan_out], out);
            }
        }
        if l + 1 < self.num_layers() {
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            })
        }
    }

    /// All layer activations, input included.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let mut out = Vec::with_capacity(self.dims[l + 1]);
            self.layer_forward(l, &acts[l], &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.num_layers() {
            self.layer_forward(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// First-layer activations, used as the episodic-memory key. For a
    /// network without hidden layers this is the output itself.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = Vec::new();
        self.layer_forward(0, x, &mut out);
        Ok(out)
    }

    pub fn embed_dim(&self) -> usize {
        self.dims[1]
    }

    /// Mean squared error between `forward(x)[a]` and the target, and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient<X: AsRef<[f64]>>(
        &self,
        inputs: &[X],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let n = inputs.len();
        if n == 0 || actions.len() != n || targets.len() != n {
            return Err(Error::Domain(format!(
                "batch lengths differ or are empty: {n} inputs, {} actions, {} targets",
                actions.len(),
                targets.len()
            )));
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::Training(format!("non-finite target {t}")));
        }
        let out_dim = self.output_dim();
        if let Some(&a) = actions.iter().find(|&&a| a >= out_dim) {
            return Err(Error::Domain(format!("action {a} outside output width {out_dim}")));
        }

        let scale = 1.0 / n as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        for ((x, &a), &target) in inputs.iter().zip(actions).zip(targets) {
            let x = x.as_ref();
            self.check_input(x)?;
            let acts = self.activations(x);
            let err = acts[self.num_layers()][a] - target;
            loss += err * err;

            delta.clear();
            delta.resize(out_dim, 0.0);
            delta[a] = 2.0 * err * scale;
            for l in (0..self.num_layers()).rev() {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let w_off = self.offsets[l];
                let b_off = w_off + fan_in * fan_out;
                axpy(1.0, &delta, &mut grad[b_off..b_off + fan_out]);
                let input = &acts[l];
                for (i, &xi) in input.iter().enumerate() {
                    if xi != 0.0 {
                        let row = w_off + i * fan_out;
                        axpy(xi, &delta, &mut grad[row..row + fan_out]);
                    }
                }
                if l == 0 {
                    break;
                }
                let w = self.weights(l);
                prev_delta.clear();
                prev_delta.extend((0..fan_in).map(|i| {
                    if input[i] > 0.0 {
                        dot(&w[i * fan_out..(i + 1) * fan_out], &delta)
                    } else {
                        0.0
                    }
                }));
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        Ok((loss * scale, grad))
    }

    /// One SGD step on the batch; returns the loss before the step.
    pub fn train_batch<X: AsRef<[f64]>>(
        &mut self,
        inputs: &[X],
        actions: &[usize],
        targets: &[f64],
        learning_rate: f64,
    ) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(inputs, actions, targets)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }
        if learning_rate != 0.0 {
            axpy(-learning_rate, &grad, &mut self.params);
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training("parameters became non-finite".into()));
        }
        Ok(loss)
    }

    /// Flat little-endian checkpoint: 8 magic bytes, `u32` layer count,
    /// `u32` widths, then every parameter as `f64` in storage order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mlp> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        if !(2..=64).contains(&count) {
            return Err(Error::Checkpoint(format!("implausible layer count {count}")));
        }
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut word)?;
            dims.push(u32::from_le_bytes(word) as usize);
        }
        let total = *layer_offsets(&dims).last().unwrap();
        let mut params = Vec::with_capacity(total);
        let mut buf = [0u8; 8];
        for _ in 0..total {
            r.read_exact(&mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Mlp::from_params(&dims, params).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DndConfig {
    pub capacity: usize,
    pub neighbors: usize,
    pub smoothing: f64,
    pub write_rate: f64,
}

impl Default for DndConfig {
    fn default() -> Self {
        DndConfig {
            capacity: 50_000,
            neighbors: 10,
            smoothing: 1e-3,
            write_rate: 0.1,
        }
    }
}

/// Result of a nearest-neighbour read: the estimate plus the entries and
/// normalised kernel weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub value: f64,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Episodic dictionary for a single action.
#[derive(Debug, Clone)]
pub struct Dnd {
    cfg: DndConfig,
    keys: Vec<Vec<f64>>,
    values: Vec<f64>,
    last_use: Vec<u64>,
    clock: u64,
}

impl Dnd {
    pub fn new(cfg: DndConfig) -> Result<Self> {
        if cfg.capacity == 0 || cfg.neighbors == 0 {
            return Err(Error::Config("dictionary capacity and neighbour count must be >= 1".into()));
        }
        if !(cfg.smoothing > 0.0) {
            return Err(Error::Config("kernel smoothing constant must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.write_rate) {
            return Err(Error::Config("write rate must lie in [0, 1]".into()));
        }
        Ok(Dnd {
            cfg,
            keys: Vec::new(),
            values: Vec::new(),
            last_use: Vec::new(),
            clock: 0,
        })
    }

    pub fn config(&self) -> &DndConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, i: usize) -> &[f64] {
        &self.keys[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value stored under a bitwise-identical key, if any.
    pub fn exact(&self, key: &[f64]) -> Option<f64> {
        self.find(key).map(|i| self.values[i])
    }

    fn find(&self, key: &[f64]) -> Option<usize> {
        self.keys.iter().position(|k| {
            k.len() == key.len() && k.iter().zip(key).all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    /// Kernel-weighted average over the `p` nearest keys, with weights
    /// proportional to `1 / (d^2 + smoothing)`.
    pub fn lookup(&self, key: &[f64]) -> Result<Lookup> {
        if self.keys.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if key.len() != self.keys[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.keys[0].len(),
                actual: key.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let d2 = k.iter().zip(key).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let p = self.cfg.neighbors.min(dist.len());
        if p < dist.len() {
            dist.select_nth_unstable_by(p - 1, order);
            dist.truncate(p);
        }
        dist.sort_by(order);

        let raw: Vec<f64> = dist.iter().map(|(d2, _)| 1.0 / (d2 + self.cfg.smoothing)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let value = dist
            .iter()
            .zip(&weights)
            .map(|((_, i), w)| w * self.values[*i])
            .sum();
        Ok(Lookup {
            value,
            neighbors: dist.into_iter().map(|(_, i)| i).collect(),
            weights,
        })
    }

    /// Marks the entries behind a lookup as recently used.
    pub fn touch(&mut self, lookup: &Lookup) {
        self.clock += 1;
        for &i in &lookup.neighbors {
            if let Some(t) = self.last_use.get_mut(i) {
                *t = self.clock;
            }
        }
    }

    /// Moves an existing key's value toward `value` by the write rate, or
    /// appends the pair, evicting the least recently used entry when full.
    pub fn write(&mut self, key: &[f64], value: f64) -> Result<()> {
        self.write_with_rate(key, value, self.cfg.write_rate)
    }

    pub fn write_with_rate(&mut self, key: &[f64], value: f64, rate: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Domain(format!("non-finite dictionary value {value}")));
        }
        if let Some(k) = self.keys.first() {
            if k.len() != key.len() {
                return Err(Error::DimensionMismatch {
                    expected: k.len(),
                    actual: key.len(),
                });
            }
        }
        self.clock += 1;
        if let Some(i) = self.find(key) {
            self.values[i] += rate * (value - self.values[i]);
            self.last_use[i] = self.clock;
            return Ok(());
        }
        if self.keys.len() >= self.cfg.capacity {
            let victim = self
                .last_use
                .iter()
                .enumerate()
                .min_by_key(|(i, t)| (**t, *i))
                .map(|(i, _)| i)
                .expect("store is non-empty at capacity");
            self.keys.swap_remove(victim);
            self.values.swap_remove(victim);
            self.last_use.swap_remove(victim);
        }
        self.keys.push(key.to_vec());
        self.values.push(value);
        self.last_use.push(self.clock);
        Ok(())
    }
}
