//! Classical comparators: a randomized approximate token-swapping heuristic
//! and an exact breadth-first oracle for small instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Permutation;
use crate::lattice::{all_pairs_distances, DistanceMatrix, TopologyMask};
use crate::rng::{rng_for, tags};
use crate::synth::{circuit_depth, SwapCircuit};
use crate::{Error, Result};

/// Randomized token-swapping heuristic.
///
/// Tokens live on active nodes; `tokens[v]` is the destination of the token
/// currently at `v`. Each trial repeats: if any active-edge swap lowers the
/// potential `sum(dist(v, tokens[v]))` by 2 (a happy swap, both tokens
/// improve), apply one uniformly at random; otherwise move a random
/// unfinished token one step along a random shortest path to its goal. An
/// unfinished token moved by such a forced step is not picked again until
/// the next happy swap, which gives strict progress. The best trial by
/// `(gates, depth)` wins, and the returned circuit always verifies.
pub fn token_swap(
    perm: &Permutation,
    mask: &TopologyMask,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SwapCircuit> {
    if perm.len() != mask.lattice().num_nodes() {
        return Err(Error::InvalidArgument(
            "permutation length does not match lattice".into(),
        ));
    }
    if !perm.fixes_inactive(mask) {
        return Err(Error::InvalidArgument(
            "permutation moves inactive nodes".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if perm.is_identity() {
        return Ok(SwapCircuit::new(Vec::new(), perm.clone(), mask.clone()));
    }
    let dist = all_pairs_distances(mask);
    let base: u64 = rng.gen();

    let mut best: Option<(usize, usize, Vec<usize>)> = None;
    for t in 0..trials {
        let mut trial_rng = rng_for(base, &[tags::TOKENSWAP, t as u64]);
        if let Some(swaps) = run_trial(perm, mask, &dist, &mut trial_rng) {
            let pairs: Vec<(usize, usize)> = swaps
                .iter()
                .map(|&e| mask.lattice().edges()[e])
                .collect();
            let depth = circuit_depth(mask.lattice().num_nodes(), &pairs);
            let better = match &best {
                None => true,
                Some((g, d, _)) => (swaps.len(), depth) < (*g, *d),
            };
            if better {
                best = Some((swaps.len(), depth, swaps));
            }
        }
    }
    let (_, _, swaps) =
        best.ok_or_else(|| Error::Internal("all token-swapping trials failed".into()))?;
    let gates: Vec<usize> = swaps.into_iter().rev().collect();
    let circuit = SwapCircuit::new(gates, perm.clone(), mask.clone());
    if !circuit.verify() {
        return Err(Error::Internal(
            "token swapper produced a non-verifying circuit".into(),
        ));
    }
    Ok(circuit)
}

fn run_trial(
    perm: &Permutation,
    mask: &TopologyMask,
    dist: &DistanceMatrix,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let lat = mask.lattice();
    let n = lat.num_nodes();
    let mut tokens: Vec<usize> = (0..n).map(|v| perm.token_at(v)).collect();
    let mut phi: u64 = mask
        .active_nodes()
        .map(|v| dist.get(v, tokens[v]) as u64)
        .sum();

    let active_edges: Vec<usize> = mask.active_edges().collect();
    let k = mask.num_active_nodes();
    let step_cap = 20 * k * k + 64;

    let mut swaps = Vec::new();
    // Tokens moved by forced steps since the last happy swap, keyed by
    // destination id.
    let mut window = vec![false; n];
    let mut happy = Vec::new();

    while phi > 0 {
        if swaps.len() > step_cap {
            return None;
        }
        happy.clear();
        for &e in &active_edges {
            let (a, b) = lat.edges()[e];
            let (ta, tb) = (tokens[a], tokens[b]);
            let delta = dist.get(b, ta) as i64 - dist.get(a, ta) as i64 + dist.get(a, tb) as i64
                - dist.get(b, tb) as i64;
            if delta == -2 {
                happy.push(e);
            }
        }
        if !happy.is_empty() {
            let e = happy[rng.gen_range(0..happy.len())];
            let (a, b) = lat.edges()[e];
            tokens.swap(a, b);
            phi -= 2;
            swaps.push(e);
            window.fill(false);
            continue;
        }

        // Forced step: move an unfinished token one hop along a shortest
        // path. Tokens already forced in this window are ineligible.
        let mut eligible: Vec<usize> = mask
            .active_nodes()
            .filter(|&v| tokens[v] != v && !window[tokens[v]])
            .collect();
        if eligible.is_empty() {
            // Exhausted window without a happy swap; reset and continue.
            window.fill(false);
            eligible = mask.active_nodes().filter(|&v| tokens[v] != v).collect();
        }
        let v = eligible[rng.gen_range(0..eligible.len())];
        let tok = tokens[v];
        let dv = dist.get(v, tok);
        let closer: Vec<usize> = lat
            .neighbors(v)
            .iter()
            .filter(|&&(w, e)| mask.is_edge_active(e) && dist.get(w, tok) + 1 == dv)
            .map(|&(_, e)| e)
            .collect();
        debug_assert!(!closer.is_empty(), "no shortest-path step available");
        let e = closer[rng.gen_range(0..closer.len())];
        let (a, b) = lat.edges()[e];
        // Recompute the potential change for the displaced partner.
        let (ta, tb) = (tokens[a], tokens[b]);
        let delta = dist.get(b, ta) as i64 - dist.get(a, ta) as i64 + dist.get(a, tb) as i64
            - dist.get(b, tb) as i64;
        tokens.swap(a, b);
        phi = (phi as i64 + delta) as u64;
        swaps.push(e);
        window[tok] = true;
    }
    Some(swaps)
}

/// Node-count ceiling for the exact oracle (state space 10! = 3.6M).
pub const ORACLE_MAX_NODES: usize = 10;

/// Exact minimal-swap-count oracle over one mask.
///
/// Precomputes BFS distances from the identity over all permutations of the
/// active nodes; queries are table lookups and witnesses come from greedy
/// descent. Permutations are stored by factorial-number-system rank.
pub struct SwapOracle {
    mask: TopologyMask,
    active: Vec<usize>,
    local_of: Vec<usize>,
    /// Active edges in local indices, paired with the lattice edge id.
    local_edges: Vec<(u8, u8, usize)>,
    dist: Vec<u8>,
}

impl SwapOracle {
    pub fn new(mask: &TopologyMask) -> Result<SwapOracle> {
        let k = mask.num_active_nodes();
        if k > ORACLE_MAX_NODES {
            return Err(Error::Capacity(format!(
                "exact oracle supports at most {ORACLE_MAX_NODES} active nodes, mask has {k}"
            )));
        }
        let lat = mask.lattice();
        let active: Vec<usize> = mask.active_nodes().collect();
        let mut local_of = vec![usize::MAX; lat.num_nodes()];
        for (i, &v) in active.iter().enumerate() {
            local_of[v] = i;
        }
        let local_edges: Vec<(u8, u8, usize)> = mask
            .active_edges()
            .map(|e| {
                let (a, b) = lat.edges()[e];
                (local_of[a] as u8, local_of[b] as u8, e)
            })
            .collect();

        let states = factorial(k);
        let mut dist = vec![u8::MAX; states];
        let identity: Vec<u8> = (0..k as u8).collect();
        dist[rank(&identity)] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(identity);
        while let Some(state) = queue.pop_front() {
            let d = dist[rank(&state)];
            for &(la, lb, _) in &local_edges {
                let mut next = state.clone();
                next.swap(la as usize, lb as usize);
                let r = rank(&next);
                if dist[r] == u8::MAX {
                    dist[r] = d + 1;
                    queue.push_back(next);
                }
            }
        }
        Ok(SwapOracle {
            mask: mask.clone(),
            active,
            local_of,
            local_edges,
            dist,
        })
    }

    pub fn mask(&self) -> &TopologyMask {
        &self.mask
    }

    fn local_perm(&self, perm: &Permutation) -> Result<Vec<u8>> {
        if perm.len() != self.mask.lattice().num_nodes() {
            return Err(Error::InvalidArgument(
                "permutation length does not match lattice".into(),
            ));
        }
        if !perm.fixes_inactive(&self.mask) {
            return Err(Error::InvalidArgument(
                "permutation moves inactive nodes".into(),
            ));
        }
        Ok(self
            .active
            .iter()
            .map(|&dest| self.local_of[perm.mapping()[dest]] as u8)
            .collect())
    }

    /// Minimal number of active-edge swaps from `perm` to identity.
    pub fn optimal_count(&self, perm: &Permutation) -> Result<usize> {
        let local = self.local_perm(perm)?;
        Ok(self.dist[rank(&local)] as usize)
    }

    /// Minimal count plus one optimal witness circuit.
    pub fn witness(&self, perm: &Permutation) -> Result<(usize, SwapCircuit)> {
        let mut local = self.local_perm(perm)?;
        let total = self.dist[rank(&local)] as usize;
        let mut actions = Vec::with_capacity(total);
        let mut d = total;
        while d > 0 {
            let mut advanced = false;
            for &(la, lb, edge) in &self.local_edges {
                // Environment dynamics: relabel the values la <-> lb.
                let pa = local.iter().position(|&x| x == la).unwrap();
                let pb = local.iter().position(|&x| x == lb).unwrap();
                local.swap(pa, pb);
                if self.dist[rank(&local)] as usize == d - 1 {
                    actions.push(edge);
                    d -= 1;
                    advanced = true;
                    break;
                }
                local.swap(pa, pb);
            }
            debug_assert!(advanced, "descent stalled");
            if !advanced {
                return Err(Error::Internal("oracle descent stalled".into()));
            }
        }
        let gates: Vec<usize> = actions.into_iter().rev().collect();
        let circuit = SwapCircuit::new(gates, perm.clone(), self.mask.clone());
        if !circuit.verify() {
            return Err(Error::Internal("oracle witness failed verification".into()));
        }
        Ok((total, circuit))
    }
}

/// One-shot exact query: builds the oracle for `mask` and returns the
/// minimal swap count with a witness circuit.
pub fn bfs_optimal(perm: &Permutation, mask: &TopologyMask) -> Result<(usize, SwapCircuit)> {
    SwapOracle::new(mask)?.witness(perm)
}

fn factorial(k: usize) -> usize {
    (1..=k).product::<usize>().max(1)
}

/// Lehmer rank of a permutation of 0..k.
fn rank(perm: &[u8]) -> usize {
    let k = perm.len();
    let mut r = 0usize;
    for i in 0..k {
        let mut smaller = 0usize;
        for j in i + 1..k {
            if perm[j] < perm[i] {
                smaller += 1;
            }
        }
        r = r * (k - i) + smaller;
    }
    r
}
