//! Detail transfer from training frames onto generated frames.
//!
//! For each generated frame the nearest training frames in latent space are
//! warped onto it by optical flow. A minimum-cost path through these
//! candidates picks one per frame, trading fidelity to the generated frame
//! against agreement between consecutive picks. The pick is then blended
//! with the generated frame by screened Poisson: gradients from the warped
//! training frame, colour from the generated one.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_warp, FlowParams};
use crate::frame::{mean_l1, mean_l1_unchecked, Frame, FrameSequence};
use crate::graph::{min_cost_path, LayeredGraph};
use crate::pca::{LatentCode, PcaBasis};
use crate::poisson::screened_poisson_blend;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    /// Weight of the candidate-to-generated-frame term.
    pub alpha: f64,
    /// Weight of the consecutive-candidate term.
    pub beta: f64,
    /// Screening weight; larger keeps more colour from the generated frame.
    pub lambda: f64,
    pub k: usize,
    pub flow: FlowParams,
}

impl Default for BlendParams {
    fn default() -> Self {
        BlendParams {
            alpha: 1.0,
            beta: 1.0,
            lambda: 50.0,
            k: 5,
            flow: FlowParams::default(),
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) || !ok(self.lambda) {
            return Err(Error::contract("alpha, beta and lambda must be finite and non-negative"));
        }
        if self.k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance_squared: f64,
}

/// Heap entry ordered by distance, then index.
struct Entry(f64, usize);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Latent codes of a frame sequence, searchable by Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeIndex {
    codes: Vec<LatentCode>,
}

impl CodeIndex {
    pub fn new(codes: Vec<LatentCode>) -> Result<Self> {
        if let Some(first) = codes.first() {
            if codes.iter().any(|c| c.dim() != first.dim()) {
                return Err(Error::contract("codes have different dimensions"));
            }
        }
        Ok(CodeIndex { codes })
    }

    pub fn from_sequence(seq: &FrameSequence, basis: &PcaBasis) -> Result<Self> {
        Self::new(seq.frames().iter().map(|f| basis.encode(f)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[LatentCode] {
        &self.codes
    }

    /// The `k` nearest codes, ascending by distance; ties go to the lower index.
    pub fn nearest(&self, target: &LatentCode, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.codes.len() {
            return Err(Error::contract("k must lie between 1 and the number of frames"));
        }
        if target.dim() != self.codes[0].dim() {
            return Err(Error::contract("query dimension does not match the index"));
        }
        // Max-heap holding the best k seen so far.
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (i, c) in self.codes.iter().enumerate() {
            let entry = Entry(c.distance_squared(target), i);
            if heap.len() < k {
                heap.push(entry);
            } else if entry < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(entry);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|Entry(d, i)| Neighbor {
                index: i,
                distance_squared: d,
            })
            .collect())
    }
}

/// The `k` training frames nearest to `target_z`, ascending by distance.
pub fn knn_candidates(target_z: &LatentCode, seq: &FrameSequence, basis: &PcaBasis, k: usize) -> Result<Vec<(usize, Frame)>> {
    let index = CodeIndex::from_sequence(seq, basis)?;
    Ok(index
        .nearest(target_z, k)?
        .into_iter()
        .map(|n| (n.index, seq.frames()[n.index].clone()))
        .collect())
}

/// `α·L1(target, candidate) + β·L1(candidate, previous)`; the second term is
/// dropped when there is no previous pick.
pub fn edge_cost(warped_candidate: &Frame, target: &Frame, previous: Option<&Frame>, params: &BlendParams) -> Result<f64> {
    params.validate()?;
    let data = mean_l1(target, warped_candidate)?;
    let smooth = match previous {
        Some(p) => mean_l1(warped_candidate, p)?,
        None => 0.0,
    };
    Ok(params.alpha * data + params.beta * smooth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Index of the training frame.
    pub index: usize,
    /// The training frame warped onto the generated frame.
    pub warped: Frame,
    pub flow_fell_back: bool,
}

/// One layer of candidates per generated frame between two keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGraph {
    pub layers: Vec<Vec<Candidate>>,
    pub graph: LayeredGraph,
}

/// Builds the candidate graph. Source edges carry only the data term; edges
/// into the sink carry only the smoothness term against the end keyframe.
pub fn build_candidate_graph(
    gan_frames: &[Frame],
    end_keyframe: &Frame,
    seq: &FrameSequence,
    index: &CodeIndex,
    basis: &PcaBasis,
    params: &BlendParams,
) -> Result<CandidateGraph> {
    params.validate()?;
    if gan_frames.is_empty() {
        return Err(Error::contract("nothing to denoise"));
    }
    if index.len() != seq.len() {
        return Err(Error::contract("code index does not match the sequence"));
    }
    let mut layers = Vec::with_capacity(gan_frames.len());
    for target in gan_frames {
        if !target.same_shape(&seq.frames()[0]) {
            return Err(Error::contract("generated frame shape does not match the training frames"));
        }
        let z = basis.encode(target)?;
        let mut layer = Vec::with_capacity(params.k);
        for n in index.nearest(&z, params.k)? {
            let fw = flow_warp(&seq.frames()[n.index], target, &params.flow)?;
            layer.push(Candidate {
                index: n.index,
                warped: fw.frame,
                flow_fell_back: fw.fell_back,
            });
        }
        layers.push(layer);
    }
    let l1 = |a: &Frame, b: &Frame| mean_l1_unchecked(a.data(), b.data());
    let source = layers[0].iter().map(|c| params.alpha * l1(&gan_frames[0], &c.warped)).collect();
    let transitions = (1..layers.len())
        .map(|i| {
            let mut costs = Vec::with_capacity(layers[i - 1].len() * layers[i].len());
            for a in &layers[i - 1] {
                for b in &layers[i] {
                    costs.push(params.alpha * l1(&gan_frames[i], &b.warped) + params.beta * l1(&b.warped, &a.warped));
                }
            }
            costs
        })
        .collect();
    if !end_keyframe.same_shape(&gan_frames[0]) {
        return Err(Error::contract("keyframe shape does not match the generated frames"));
    }
    let sink = layers[layers.len() - 1]
        .iter()
        .map(|c| params.beta * l1(&c.warped, end_keyframe))
        .collect();
    Ok(CandidateGraph {
        layers,
        graph: LayeredGraph::new(source, transitions, sink)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameChoice {
    pub candidates: Vec<usize>,
    pub chosen: usize,
    pub flow_fell_back: bool,
    pub blend_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub frames: Vec<FrameChoice>,
    pub path_cost: f64,
}

impl DenoiseReport {
    /// One line per frame: candidates, the chosen training frame and flags.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "path_cost {:.6}", self.path_cost);
        for (i, f) in self.frames.iter().enumerate() {
            let _ = write!(out, "frame {i} chosen {} candidates", f.chosen);
            for c in &f.candidates {
                let _ = write!(out, " {c}");
            }
            let _ = writeln!(
                out,
                " residual {:.3e}{}",
                f.blend_residual,
                if f.flow_fell_back { " flow-fallback" } else { "" }
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub frames: Vec<Frame>,
    pub report: DenoiseReport,
}

/// Replaces each generated frame by a Poisson blend of itself with the
/// training frame chosen for it. `keyframes` are the frames the generated
/// run starts from and ends at.
pub fn denoise_sequence(
    gan_frames: &[Frame],
    keyframes: (&Frame, &Frame),
    seq: &FrameSequence,
    basis: &PcaBasis,
    params: &BlendParams,
) -> Result<Denoised> {
    let index = CodeIndex::from_sequence(seq, basis)?;
    denoise_with_index(gan_frames, keyframes, seq, &index, basis, params)
}

/// As [`denoise_sequence`], reusing a prebuilt code index.
pub fn denoise_with_index(
    gan_frames: &[Frame],
    keyframes: (&Frame, &Frame),
    seq: &FrameSequence,
    index: &CodeIndex,
    basis: &PcaBasis,
    params: &BlendParams,
) -> Result<Denoised> {
    if !keyframes.0.same_shape(keyframes.1) {
        return Err(Error::contract("keyframes differ in shape"));
    }
    let cg = build_candidate_graph(gan_frames, keyframes.1, seq, index, basis, params)?;
    let path = min_cost_path(&cg.graph);
    let mut frames = Vec::with_capacity(gan_frames.len());
    let mut choices = Vec::with_capacity(gan_frames.len());
    for (i, &node) in path.nodes.iter().enumerate() {
        let pick = &cg.layers[i][node];
        let blend = screened_poisson_blend(&gan_frames[i], &pick.warped, params.lambda)?;
        choices.push(FrameChoice {
            candidates: cg.layers[i].iter().map(|c| c.index).collect(),
            chosen: pick.index,
            flow_fell_back: pick.flow_fell_back,
            blend_residual: blend.max_residual(),
        });
        frames.push(blend.frame.with_position(gan_frames[i].index, gan_frames[i].timestamp));
    }
    Ok(Denoised {
        frames,
        report: DenoiseReport {
            frames: choices,
            path_cost: path.cost,
        },
    })
}
