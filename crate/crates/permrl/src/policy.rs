//! Observation encoding, the feedforward policy/value network, masked action
//! distributions and model persistence.
//!
//! The network is a shared trunk of three fully connected tanh layers with a
//! policy head (one logit per lattice edge) and a scalar value head. All math
//! runs in f64; parameters are kept on the f32 grid (every value is exactly
//! representable as an f32) so the binary container, which stores 32-bit
//! floats, round-trips bit-exactly.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Permutation;
use crate::lattice::{Lattice, TopologyMask};
use crate::rng::{rng_for, tags};
use crate::{Error, Result};

/// Observation length for a lattice: one-hot permutation matrix, active-node
/// flags, active-edge flags.
pub fn obs_dim(lattice: &Lattice) -> usize {
    let n = lattice.num_nodes();
    n * n + n + lattice.num_edges()
}

/// Encode `(perm, mask)` into `out` (length must equal [`obs_dim`]).
///
/// Layout: `[one-hot permutation matrix row-major | node mask | edge mask]`,
/// where row `i` of the permutation block marks the node holding the token
/// destined for node `i`.
pub fn encode_into(perm: &Permutation, mask: &TopologyMask, out: &mut [f64]) {
    let lat = mask.lattice();
    let n = lat.num_nodes();
    debug_assert_eq!(perm.len(), n);
    debug_assert_eq!(out.len(), obs_dim(lat));
    out.fill(0.0);
    for (i, &v) in perm.mapping().iter().enumerate() {
        out[i * n + v] = 1.0;
    }
    for (i, &b) in mask.node_flags().iter().enumerate() {
        out[n * n + i] = if b { 1.0 } else { 0.0 };
    }
    for (i, &b) in mask.edge_flags().iter().enumerate() {
        out[n * n + n + i] = if b { 1.0 } else { 0.0 };
    }
}

/// Encode to a fresh vector; errors on a perm/mask dimension mismatch.
pub fn encode(perm: &Permutation, mask: &TopologyMask) -> Result<Vec<f64>> {
    if perm.len() != mask.lattice().num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "permutation over {} nodes does not match {}x{} lattice",
            perm.len(),
            mask.lattice().rows(),
            mask.lattice().cols()
        )));
    }
    let mut out = vec![0.0; obs_dim(mask.lattice())];
    encode_into(perm, mask, &mut out);
    Ok(out)
}

/// Default hidden widths of the trunk.
pub const DEFAULT_HIDDEN: [usize; 3] = [512, 512, 512];

/// Scale applied to the policy head at init so early policies stay close to
/// uniform over the masked support.
const POLICY_HEAD_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerView {
    pub w_off: usize,
    pub b_off: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Analytic parameter count for a given lattice and trunk widths.
pub fn param_count_for(rows: usize, cols: usize, hidden: &[usize]) -> u64 {
    let n = rows * cols;
    let e = rows * (cols.saturating_sub(1)) + rows.saturating_sub(1) * cols;
    let obs = n * n + n + e;
    let mut total = 0u64;
    let mut prev = obs;
    for &h in hidden {
        total += (prev * h + h) as u64;
        prev = h;
    }
    total += (prev * e + e) as u64; // policy head
    total += (prev + 1) as u64; // value head
    total
}

/// The policy/value network.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    rows: usize,
    cols: usize,
    hidden: Vec<usize>,
    obs_dim: usize,
    num_edges: usize,
    init_seed: u64,
    params: Vec<f64>,
    layout: Vec<LayerView>,
}

fn f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

impl PolicyNet {
    /// Fresh network with scaled uniform fan-in init from a recorded seed.
    pub fn new(rows: usize, cols: usize, hidden: &[usize], seed: u64) -> Result<PolicyNet> {
        if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be non-empty and positive".into(),
            ));
        }
        let lattice = Lattice::new(rows, cols)?;
        let mut net = PolicyNet::zeroed(rows, cols, hidden, seed, &lattice);
        let mut rng = rng_for(seed, &[tags::NET_INIT]);
        let n_layers = net.layout.len();
        for (li, view) in net.layout.clone().into_iter().enumerate() {
            let is_policy_head = li == n_layers - 2;
            let scale = if is_policy_head {
                POLICY_HEAD_INIT_SCALE
            } else {
                1.0
            };
            let limit = scale * (3.0 / view.in_dim as f64).sqrt();
            for w in &mut net.params[view.w_off..view.w_off + view.in_dim * view.out_dim] {
                *w = f32_grid(rng.gen_range(-limit..limit));
            }
            // Biases stay zero.
        }
        Ok(net)
    }

    fn zeroed(
        rows: usize,
        cols: usize,
        hidden: &[usize],
        seed: u64,
        lattice: &Lattice,
    ) -> PolicyNet {
        let obs_dim = obs_dim(lattice);
        let num_edges = lattice.num_edges();
        let mut layout = Vec::with_capacity(hidden.len() + 2);
        let mut off = 0;
        let mut prev = obs_dim;
        for &h in hidden {
            layout.push(LayerView {
                w_off: off,
                b_off: off + prev * h,
                in_dim: prev,
                out_dim: h,
            });
            off += prev * h + h;
            prev = h;
        }
        for out_dim in [num_edges, 1] {
            layout.push(LayerView {
                w_off: off,
                b_off: off + prev * out_dim,
                in_dim: prev,
                out_dim,
            });
            off += prev * out_dim + out_dim;
        }
        PolicyNet {
            rows,
            cols,
            hidden: hidden.to_vec(),
            obs_dim,
            num_edges,
            init_seed: seed,
            params: vec![0.0; off],
            layout,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn param_count(&self) -> u64 {
        self.params.len() as u64
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layout(&self) -> &[LayerView] {
        &self.layout
    }

    pub(crate) fn trunk_layers(&self) -> usize {
        self.hidden.len()
    }

    /// Snap all parameters to the f32 grid; called after every optimizer
    /// step so persistence stays lossless.
    pub(crate) fn quantize_params(&mut self) {
        for p in &mut self.params {
            *p = f32_grid(*p);
        }
    }

    /// Whether `other` has identical architecture (not weights).
    pub fn same_dims(&self, other: &PolicyNet) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.hidden == other.hidden
    }

    /// Single-observation forward pass: `(logits, value)`.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if obs.len() != self.obs_dim {
            return Err(Error::InvalidArgument(format!(
                "observation length {} does not match network input width {}",
                obs.len(),
                self.obs_dim
            )));
        }
        let mut logits = vec![0.0; self.num_edges];
        let mut value = [0.0];
        math::forward_rows(self, obs, 1, &mut logits, &mut value, None);
        Ok((logits, value[0]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<PolicyNet> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        PolicyNet::from_bytes(&bytes)
    }

    /// Serialize to the versioned binary container.
    ///
    /// Layout: magic `PRLM`, u32 format version, u32 rows, u32 cols, u32
    /// encoding version, u32 hidden-layer count, the hidden widths as u32,
    /// u64 parameter count, u64 init seed, the parameters as little-endian
    /// f32 in layer order (each matrix row-major, weights then biases), and
    /// a trailing CRC-32 of the parameter block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.params.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&ENCODING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.hidden.len() as u32).to_le_bytes());
        for &h in &self.hidden {
            out.extend_from_slice(&(h as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.param_count().to_le_bytes());
        out.extend_from_slice(&self.init_seed.to_le_bytes());
        let param_start = out.len();
        for &p in &self.params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        let crc = crc32(&out[param_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PolicyNet> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::ModelBadMagic);
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::ModelBadVersion(version));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let encoding = r.u32()?;
        if encoding != ENCODING_VERSION {
            return Err(Error::ModelBadVersion(encoding));
        }
        let n_hidden = r.u32()? as usize;
        if n_hidden == 0 || n_hidden > 64 {
            return Err(Error::Parse(format!("implausible hidden count {n_hidden}")));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(r.u32()? as usize);
        }
        let param_count = r.u64()?;
        let seed = r.u64()?;
        let expected = param_count_for(rows, cols, &hidden);
        if param_count != expected {
            return Err(Error::ModelParamCount {
                header: param_count,
                expected,
            });
        }
        let param_bytes = r.take(param_count as usize * 4)?;
        let stored_crc = r.u32()?;
        let computed = crc32(param_bytes);
        if stored_crc != computed {
            return Err(Error::ModelChecksum {
                stored: stored_crc,
                computed,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelTruncated(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let lattice = Lattice::new(rows, cols)?;
        let mut net = PolicyNet::zeroed(rows, cols, &hidden, seed, &lattice);
        for (i, chunk) in param_bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "parameter {i} is not finite"
                )));
            }
            net.params[i] = v as f64;
        }
        Ok(net)
    }
}

const MAGIC: &[u8; 4] = b"PRLM";
const CONTAINER_VERSION: u32 = 1;
const ENCODING_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelTruncated(format!(
                "needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

const CRC_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

/// CRC-32 (IEEE) over a byte slice.
pub(crate) fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xffff_ffffu32;
    for &b in bytes {
        c = CRC_TABLE[((c ^ b as u32) & 0xff) as usize] ^ (c >> 8);
    }
    c ^ 0xffff_ffff
}

/// Probabilities over all lattice edges: zero exactly on inactive edges,
/// normalized over the active ones.
#[derive(Debug, Clone)]
pub struct MaskedDistribution {
    probs: Vec<f64>,
}

impl MaskedDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Additive logit offset for masked-out actions.
const MASK_OFFSET: f64 = -1e9;

/// Softmax over the active-edge logits only. Inactive edges receive a large
/// negative offset before normalization and are zeroed exactly afterwards.
pub fn masked_distribution(logits: &[f64], mask: &TopologyMask) -> Result<MaskedDistribution> {
    if logits.len() != mask.lattice().num_edges() {
        return Err(Error::InvalidArgument(format!(
            "{} logits for {} edges",
            logits.len(),
            mask.lattice().num_edges()
        )));
    }
    if mask.num_active_edges() == 0 {
        return Err(Error::NoValidAction(
            "mask has no active edges to act on".into(),
        ));
    }
    let flags = mask.edge_flags();
    let mut shifted = vec![0.0; logits.len()];
    let mut max = f64::NEG_INFINITY;
    for (i, &z) in logits.iter().enumerate() {
        let z = if flags[i] { z } else { z + MASK_OFFSET };
        shifted[i] = z;
        if z > max {
            max = z;
        }
    }
    let mut sum = 0.0;
    for (i, s) in shifted.iter_mut().enumerate() {
        let p = if flags[i] { (*s - max).exp() } else { 0.0 };
        *s = p;
        sum += p;
    }
    for p in &mut shifted {
        *p /= sum;
    }
    Ok(MaskedDistribution { probs: shifted })
}

/// Log-probabilities and entropy of the masked softmax, computed over the
/// active support only. Returns `(probs, entropy)` where `probs` is zero on
/// inactive edges; `log_prob_of` gives the log-probability of one edge.
pub(crate) struct MaskedStats {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub entropy: f64,
}

pub(crate) fn masked_stats(logits: &[f64], flags: &[bool]) -> MaskedStats {
    debug_assert_eq!(logits.len(), flags.len());
    let mut max = f64::NEG_INFINITY;
    for (i, &z) in logits.iter().enumerate() {
        if flags[i] && z > max {
            max = z;
        }
    }
    let mut sum = 0.0;
    for (i, &z) in logits.iter().enumerate() {
        if flags[i] {
            sum += (z - max).exp();
        }
    }
    let log_sum = sum.ln();
    let mut probs = vec![0.0; logits.len()];
    let mut log_probs = vec![f64::NEG_INFINITY; logits.len()];
    let mut entropy = 0.0;
    for (i, &z) in logits.iter().enumerate() {
        if flags[i] {
            let lp = z - max - log_sum;
            let p = lp.exp();
            probs[i] = p;
            log_probs[i] = lp;
            entropy -= p * lp;
        }
    }
    MaskedStats {
        probs,
        log_probs,
        entropy,
    }
}

/// Inference mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Greedy,
    Sampling,
}

impl std::str::FromStr for ActMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<ActMode> {
        match s {
            "greedy" => Ok(ActMode::Greedy),
            "sampling" => Ok(ActMode::Sampling),
            other => Err(Error::InvalidArgument(format!(
                "mode must be `greedy` or `sampling`, got `{other}`"
            ))),
        }
    }
}

/// Greedy argmax over a masked distribution, ties broken by lowest edge index.
pub fn greedy_action(dist: &MaskedDistribution) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > best_p {
            best_p = p;
            best = i;
        }
    }
    best
}

/// Draw an edge from a masked distribution.
pub fn sample_action(dist: &MaskedDistribution, rng: &mut ChaCha8Rng) -> usize {
    sample_index(dist.probs(), rng)
}

/// Draw an index from a probability vector whose support excludes exact
/// zeros; rounding shortfall falls back to the last positive entry.
pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_active = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_active = i;
            if u < cum {
                return i;
            }
        }
    }
    last_active
}

/// Run the net on `(perm, mask)` and pick an edge.
pub fn act(
    net: &PolicyNet,
    perm: &Permutation,
    mask: &TopologyMask,
    mode: ActMode,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if mask.lattice().rows() != net.rows() || mask.lattice().cols() != net.cols() {
        return Err(Error::InvalidArgument(format!(
            "mask lattice {}x{} does not match net lattice {}x{}",
            mask.lattice().rows(),
            mask.lattice().cols(),
            net.rows(),
            net.cols()
        )));
    }
    let obs = encode(perm, mask)?;
    let (logits, _) = net.forward(&obs)?;
    let dist = masked_distribution(&logits, mask)?;
    Ok(match mode {
        ActMode::Greedy => greedy_action(&dist),
        ActMode::Sampling => sample_action(&dist, rng),
    })
}

/// Batched network math shared by the trainer and the synthesizer.
pub(crate) mod math {
    use super::{LayerView, PolicyNet};

    /// Deterministic 8-lane dot product; the fixed association order makes
    /// results identical across runs while still vectorizing.
    #[inline]
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = [0.0f64; 8];
        let chunks = a.len() / 8;
        for k in 0..chunks {
            let (ao, bo) = (&a[k * 8..k * 8 + 8], &b[k * 8..k * 8 + 8]);
            for j in 0..8 {
                acc[j] = ao[j].mul_add(bo[j], acc[j]);
            }
        }
        let mut tail = 0.0;
        for i in chunks * 8..a.len() {
            tail = a[i].mul_add(b[i], tail);
        }
        (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
    }

    /// y[b] = W x[b] + bias for each row; W row-major `[out][in]`.
    fn linear_rows(
        params: &[f64],
        view: &LayerView,
        x: &[f64],
        rows: usize,
        y: &mut [f64],
    ) {
        let w = &params[view.w_off..view.w_off + view.in_dim * view.out_dim];
        let bias = &params[view.b_off..view.b_off + view.out_dim];
        for b in 0..rows {
            let xr = &x[b * view.in_dim..(b + 1) * view.in_dim];
            let yr = &mut y[b * view.out_dim..(b + 1) * view.out_dim];
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = bias[o] + dot(xr, &w[o * view.in_dim..(o + 1) * view.in_dim]);
            }
        }
    }

    /// Per-layer post-activation values for a batch; used by backprop.
    pub struct ForwardCache {
        /// acts[l] is the batch of tanh outputs of trunk layer l.
        pub acts: Vec<Vec<f64>>,
    }

    /// Forward `rows` observations (row-major in `obs`). Fills `logits`
    /// (rows x num_edges) and `values` (rows). When `cache` is given, trunk
    /// activations are recorded for a later backward pass.
    pub fn forward_rows(
        net: &PolicyNet,
        obs: &[f64],
        rows: usize,
        logits: &mut [f64],
        values: &mut [f64],
        mut cache: Option<&mut ForwardCache>,
    ) {
        let layout = net.layout();
        let trunk = net.trunk_layers();
        let mut cur = obs.to_vec();
        for (l, view) in layout[..trunk].iter().enumerate() {
            let mut next = vec![0.0; rows * view.out_dim];
            linear_rows(&net.params, view, &cur, rows, &mut next);
            for v in &mut next {
                *v = v.tanh();
            }
            if let Some(c) = cache.as_deref_mut() {
                c.acts[l] = next.clone();
            }
            cur = next;
        }
        linear_rows(&net.params, &layout[trunk], &cur, rows, logits);
        linear_rows(&net.params, &layout[trunk + 1], &cur, rows, values);
    }

    pub fn new_cache(net: &PolicyNet) -> ForwardCache {
        ForwardCache {
            acts: vec![Vec::new(); net.trunk_layers()],
        }
    }

    /// Accumulate parameter gradients for a batch given head gradients.
    ///
    /// `dlogits` is rows x num_edges, `dvalues` is rows; `obs` must be the
    /// batch that produced `cache`. Gradients are *added* into `grad`.
    pub fn backward_rows(
        net: &PolicyNet,
        obs: &[f64],
        rows: usize,
        cache: &ForwardCache,
        dlogits: &[f64],
        dvalues: &[f64],
        grad: &mut [f64],
    ) {
        let layout = net.layout();
        let trunk = net.trunk_layers();
        let last_act = &cache.acts[trunk - 1];
        let h_last = layout[trunk].in_dim;

        // d(trunk output) accumulated from both heads.
        let mut dh = vec![0.0; rows * h_last];

        for (head_idx, dout) in [(trunk, dlogits), (trunk + 1, dvalues)] {
            let view = &layout[head_idx];
            let w = &net.params[view.w_off..view.w_off + view.in_dim * view.out_dim];
            for b in 0..rows {
                let douts = &dout[b * view.out_dim..(b + 1) * view.out_dim];
                let xr = &last_act[b * view.in_dim..(b + 1) * view.in_dim];
                let dhr = &mut dh[b * view.in_dim..(b + 1) * view.in_dim];
                for (o, &d) in douts.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wr = &w[o * view.in_dim..(o + 1) * view.in_dim];
                    let gw = &mut grad[view.w_off + o * view.in_dim
                        ..view.w_off + (o + 1) * view.in_dim];
                    for i in 0..view.in_dim {
                        gw[i] = xr[i].mul_add(d, gw[i]);
                        dhr[i] = wr[i].mul_add(d, dhr[i]);
                    }
                    grad[view.b_off + o] += d;
                }
            }
        }

        // Back through the trunk.
        for l in (0..trunk).rev() {
            let view = &layout[l];
            let acts = &cache.acts[l];
            let below: &[f64] = if l == 0 { obs } else { &cache.acts[l - 1] };
            let w = &net.params[view.w_off..view.w_off + view.in_dim * view.out_dim];
            let mut dh_below = vec![0.0; rows * view.in_dim];
            for b in 0..rows {
                let ar = &acts[b * view.out_dim..(b + 1) * view.out_dim];
                let dhr = &dh[b * view.out_dim..(b + 1) * view.out_dim];
                let xr = &below[b * view.in_dim..(b + 1) * view.in_dim];
                let dxr = &mut dh_below[b * view.in_dim..(b + 1) * view.in_dim];
                for o in 0..view.out_dim {
                    let dz = dhr[o] * (1.0 - ar[o] * ar[o]);
                    if dz == 0.0 {
                        continue;
                    }
                    let wr = &w[o * view.in_dim..(o + 1) * view.in_dim];
                    let gw = &mut grad[view.w_off + o * view.in_dim
                        ..view.w_off + (o + 1) * view.in_dim];
                    for i in 0..view.in_dim {
                        gw[i] = xr[i].mul_add(dz, gw[i]);
                        dxr[i] = wr[i].mul_add(dz, dxr[i]);
                    }
                    grad[view.b_off + o] += dz;
                }
            }
            dh = dh_below;
        }
    }

    /// f32 copy of the network for fast batched inference. Parameters are
    /// exactly on the f32 grid, so the copy is lossless.
    pub struct InferenceNet {
        params: Vec<f32>,
        layout: Vec<LayerView>,
        trunk: usize,
        pub obs_dim: usize,
    }

    impl InferenceNet {
        pub fn from_net(net: &PolicyNet) -> InferenceNet {
            InferenceNet {
                params: net.params.iter().map(|&p| p as f32).collect(),
                layout: net.layout().to_vec(),
                trunk: net.trunk_layers(),
                obs_dim: net.obs_dim(),
            }
        }

        #[inline]
        fn dot32(a: &[f32], b: &[f32]) -> f32 {
            let mut acc = [0.0f32; 16];
            let chunks = a.len() / 16;
            for k in 0..chunks {
                let (ao, bo) = (&a[k * 16..k * 16 + 16], &b[k * 16..k * 16 + 16]);
                for j in 0..16 {
                    acc[j] = ao[j].mul_add(bo[j], acc[j]);
                }
            }
            let mut tail = 0.0f32;
            for i in chunks * 16..a.len() {
                tail = a[i].mul_add(b[i], tail);
            }
            let mut s = tail;
            for v in acc {
                s += v;
            }
            s
        }

        /// Forward a batch of observations; logits only.
        pub fn logits_rows(&self, obs: &[f32], rows: usize, logits: &mut [f32]) {
            let mut cur = obs.to_vec();
            for view in &self.layout[..self.trunk] {
                let w = &self.params[view.w_off..view.w_off + view.in_dim * view.out_dim];
                let bias = &self.params[view.b_off..view.b_off + view.out_dim];
                let mut next = vec![0.0f32; rows * view.out_dim];
                for b in 0..rows {
                    let xr = &cur[b * view.in_dim..(b + 1) * view.in_dim];
                    let yr = &mut next[b * view.out_dim..(b + 1) * view.out_dim];
                    for (o, yo) in yr.iter_mut().enumerate() {
                        *yo = (bias[o]
                            + Self::dot32(xr, &w[o * view.in_dim..(o + 1) * view.in_dim]))
                        .tanh();
                    }
                }
                cur = next;
            }
            let view = &self.layout[self.trunk];
            let w = &self.params[view.w_off..view.w_off + view.in_dim * view.out_dim];
            let bias = &self.params[view.b_off..view.b_off + view.out_dim];
            for b in 0..rows {
                let xr = &cur[b * view.in_dim..(b + 1) * view.in_dim];
                let yr = &mut logits[b * view.out_dim..(b + 1) * view.out_dim];
                for (o, yo) in yr.iter_mut().enumerate() {
                    *yo =
                        bias[o] + Self::dot32(xr, &w[o * view.in_dim..(o + 1) * view.in_dim]);
                }
            }
        }
    }
}
