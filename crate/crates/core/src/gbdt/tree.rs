//! Exact greedy regression trees grown level by level on presorted columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_features: usize,
}

impl FeatureMatrix {
    pub fn new(n_features: usize) -> Self {
        FeatureMatrix {
            data: Vec::new(),
            n_rows: 0,
            n_features,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_features = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = FeatureMatrix::new(n_features);
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_features, "row width");
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.data[i * self.n_features + f]
    }
}

/// Per-feature row orderings of a training subset, ascending by value
/// (ties by row index).
pub struct ColumnIndex {
    columns: Vec<Vec<(f64, u32)>>,
}

impl ColumnIndex {
    pub fn new(x: &FeatureMatrix, rows: &[usize]) -> Self {
        let columns = (0..x.n_features())
            .into_par_iter()
            .map(|f| {
                let mut col: Vec<(f64, u32)> =
                    rows.iter().map(|&i| (x.get(i, f), i as u32)).collect();
                col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                col
            })
            .collect();
        ColumnIndex { columns }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Structure score gain of splitting (G, H) into (GL, HL) and the remainder.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Unscaled Newton leaf value.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Threshold strictly between two distinct sorted values.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Clone, Copy)]
struct ScanState {
    g: f64,
    h: f64,
    last: f64,
    seen: bool,
    best: Option<(f64, f64)>,
}

const UNASSIGNED: u32 = u32::MAX;

struct Open {
    node: usize,
    g: f64,
    h: f64,
}

/// Grows one tree on `rows` of `x`. Splits are accepted only with positive gain
/// and both children at or above `min_child_hessian`. Ties go to the lowest
/// feature index, then the lowest threshold.
pub fn fit_tree(
    x: &FeatureMatrix,
    columns: &ColumnIndex,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> Tree {
    let mut assignment = vec![UNASSIGNED; x.n_rows()];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &i in rows {
        assignment[i] = 0;
        g0 += grad[i];
        h0 += hess[i];
    }
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut open = vec![Open {
        node: 0,
        g: g0,
        h: h0,
    }];

    for depth in 0..=params.max_depth {
        if open.is_empty() {
            break;
        }
        let best = if depth < params.max_depth {
            find_splits(columns, &assignment, grad, hess, &open, nodes.len(), params)
        } else {
            vec![None; open.len()]
        };

        let mut next = Vec::new();
        let mut redirect: Vec<Option<(SplitCandidate, u32, u32)>> = vec![None; nodes.len()];
        for (o, cand) in open.iter().zip(best) {
            match cand {
                Some((cand, gl, hl)) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes[o.node] = Node::Split {
                        feature: cand.feature,
                        threshold: cand.threshold,
                        left,
                        right,
                        gain: cand.gain,
                    };
                    redirect[o.node] = Some((cand, left as u32, right as u32));
                    next.push(Open {
                        node: left,
                        g: gl,
                        h: hl,
                    });
                    next.push(Open {
                        node: right,
                        g: o.g - gl,
                        h: o.h - hl,
                    });
                }
                None => {
                    nodes[o.node] = Node::Leaf {
                        weight: params.learning_rate * leaf_weight(o.g, o.h, params.lambda),
                    };
                }
            }
        }
        for &i in rows {
            let a = assignment[i] as usize;
            if let Some(Some((cand, left, right))) = redirect.get(a) {
                assignment[i] = if x.get(i, cand.feature) < cand.threshold {
                    *left
                } else {
                    *right
                };
            }
        }
        open = next;
    }
    Tree { nodes }
}

type NodeSplit = Option<(SplitCandidate, f64, f64)>;

fn find_splits(
    columns: &ColumnIndex,
    assignment: &[u32],
    grad: &[f64],
    hess: &[f64],
    open: &[Open],
    n_nodes: usize,
    params: &TreeParams,
) -> Vec<NodeSplit> {
    let mut slot_of = vec![usize::MAX; n_nodes];
    for (s, o) in open.iter().enumerate() {
        slot_of[o.node] = s;
    }
    let per_feature: Vec<Vec<Option<(f64, f64, f64, f64)>>> = columns
        .columns
        .par_iter()
        .map(|col| {
            let mut states = vec![
                ScanState {
                    g: 0.0,
                    h: 0.0,
                    last: f64::NAN,
                    seen: false,
                    best: None,
                };
                open.len()
            ];
            let mut best_stats = vec![None; open.len()];
            for &(v, i) in col {
                let a = assignment[i as usize];
                if a == UNASSIGNED {
                    continue;
                }
                let slot = slot_of[a as usize];
                if slot == usize::MAX {
                    continue;
                }
                let st = &mut states[slot];
                if st.seen && v > st.last {
                    let o = &open[slot];
                    let hr = o.h - st.h;
                    if st.h >= params.min_child_hessian && hr >= params.min_child_hessian {
                        let gain = split_gain(st.g, st.h, o.g, o.h, params.lambda, params.gamma);
                        if gain > 0.0 && st.best.is_none_or(|(bg, _)| gain > bg) {
                            let thr = midpoint(st.last, v);
                            st.best = Some((gain, thr));
                            best_stats[slot] = Some((gain, thr, st.g, st.h));
                        }
                    }
                }
                st.g += grad[i as usize];
                st.h += hess[i as usize];
                st.last = v;
                st.seen = true;
            }
            best_stats
        })
        .collect();

    (0..open.len())
        .map(|slot| {
            let mut best: NodeSplit = None;
            for (feature, stats) in per_feature.iter().enumerate() {
                if let Some((gain, threshold, gl, hl)) = stats[slot] {
                    if best.is_none_or(|(b, _, _)| gain > b.gain) {
                        best = Some((
                            SplitCandidate {
                                feature,
                                threshold,
                                gain,
                            },
                            gl,
                            hl,
                        ));
                    }
                }
            }
            best
        })
        .collect()
}
