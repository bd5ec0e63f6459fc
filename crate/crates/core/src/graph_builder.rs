//! Knowledge-enhanced cross-modal graph construction.
//!
//! Node order is fixed: all transcript tokens (flattened), then one
//! relation node and one entity node per retrieved knowledge pair, then one
//! video node and one audio node per utterance. Intra-modal edges chain
//! tokens, attach knowledge chains to their anchor tokens, and chain the
//! video and audio nodes; inter-modal edges join each utterance's video and
//! audio node to that utterance's tokens. The union gets self-loops and is
//! normalized as `D^{-1/2} A D^{-1/2}`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{CorpusError, FeatureProvider, Sample};
use crate::kg_store::{AnchorMatch, KnowledgeGraph, KnowledgePair, KnowledgeView};
use crate::numerics::{Matrix, SparseMatrix};

/// Default cap on knowledge pairs retrieved per anchor.
pub const DEFAULT_CAP_PER_ANCHOR: usize = 4;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("sample {sample_id}: feature provider failed: {source}")]
    Provider {
        sample_id: String,
        #[source]
        source: CorpusError,
    },
    #[error("sample {sample_id}: {message}")]
    Dimension { sample_id: String, message: String },
    #[error("sample {sample_id}: variant {variant} leaves no nodes")]
    Empty { sample_id: String, variant: Variant },
    #[error("sample {sample_id}: knowledge view cutoff {cutoff} differs from call date {call_date}")]
    Cutoff {
        sample_id: String,
        cutoff: chrono::NaiveDate,
        call_date: chrono::NaiveDate,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Token { utterance: usize, index: usize },
    KnowRel { pair: usize },
    KnowEnt { pair: usize },
    Video { utterance: usize },
    Audio { utterance: usize },
}

impl NodeKind {
    pub fn is_token(self) -> bool {
        matches!(self, NodeKind::Token { .. })
    }

    pub fn is_knowledge(self) -> bool {
        matches!(self, NodeKind::KnowRel { .. } | NodeKind::KnowEnt { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeFamily {
    TokenChain,
    TokenKnowledge,
    KnowledgeChain,
    VideoChain,
    AudioChain,
    TokenVideo,
    TokenAudio,
}

impl EdgeFamily {
    pub fn is_intra(self) -> bool {
        !matches!(self, EdgeFamily::TokenVideo | EdgeFamily::TokenAudio)
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeFamily::TokenChain => "token_chain",
            EdgeFamily::TokenKnowledge => "token_knowledge",
            EdgeFamily::KnowledgeChain => "knowledge_chain",
            EdgeFamily::VideoChain => "video_chain",
            EdgeFamily::AudioChain => "audio_chain",
            EdgeFamily::TokenVideo => "token_video",
            EdgeFamily::TokenAudio => "token_audio",
        }
    }
}

/// Undirected weight-1 edge between node positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub family: EdgeFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    WithoutText,
    WithoutKnowledge,
    WithoutVideo,
    WithoutAudio,
    WithoutGraph,
    FullGraph,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::WithoutText,
        Variant::WithoutKnowledge,
        Variant::WithoutVideo,
        Variant::WithoutAudio,
        Variant::WithoutGraph,
        Variant::FullGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutText => "without-text",
            Variant::WithoutKnowledge => "without-knowledge",
            Variant::WithoutVideo => "without-video",
            Variant::WithoutAudio => "without-audio",
            Variant::WithoutGraph => "without-graph",
            Variant::FullGraph => "full-graph",
        }
    }

    fn keeps(self, kind: NodeKind) -> bool {
        match (self, kind) {
            (Variant::WithoutText, NodeKind::Token { .. })
            | (Variant::WithoutText, NodeKind::KnowRel { .. })
            | (Variant::WithoutText, NodeKind::KnowEnt { .. }) => false,
            (Variant::WithoutKnowledge, k) => !k.is_knowledge(),
            (Variant::WithoutVideo, NodeKind::Video { .. }) => false,
            (Variant::WithoutAudio, NodeKind::Audio { .. }) => false,
            _ => true,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug)]
pub struct CrossModalGraph {
    pub sample_id: String,
    pub variant: Variant,
    pub nodes: Vec<NodeKind>,
    /// One row per node.
    pub features: Matrix,
    /// Semantic edges kept by the variant. Empty for `WithoutGraph` and
    /// `FullGraph`, whose adjacency is not derived from edges.
    pub edges: Vec<Edge>,
    /// 0/1 adjacency with self-loops.
    pub adjacency: SparseMatrix,
    pub norm_adjacency: SparseMatrix,
    /// Knowledge retrieved for the sample (before variant filtering).
    pub pairs: Vec<KnowledgePair>,
    pub anchors: Vec<AnchorMatch>,
}

impl CrossModalGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Rows pooled by the readout: token nodes, or every node when the
    /// variant has none.
    pub fn readout_nodes(&self) -> Vec<usize> {
        let tokens: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_token())
            .map(|(i, _)| i)
            .collect();
        if tokens.is_empty() {
            (0..self.nodes.len()).collect()
        } else {
            tokens
        }
    }

    /// Line-based dump: a `GRAPH` header, one `NODE` line per node, one `EDGE`
    /// line per semantic edge.
    pub fn dump(&self, sample: &Sample, kg: &KnowledgeGraph) -> String {
        let mut out = format!(
            "GRAPH {} {} nodes={} edges={} nnz={}\n",
            self.sample_id,
            self.variant,
            self.nodes.len(),
            self.edges.len(),
            self.adjacency.nnz()
        );
        for (i, kind) in self.nodes.iter().enumerate() {
            let line = match *kind {
                NodeKind::Token { utterance, index } => format!(
                    "NODE {i} token {utterance} {index} {}",
                    sample.utterances[utterance][index]
                ),
                NodeKind::KnowRel { pair } => format!(
                    "NODE {i} know_rel {pair} {}",
                    kg.relation_name(self.pairs[pair].relation)
                ),
                NodeKind::KnowEnt { pair } => format!(
                    "NODE {i} know_ent {pair} {}",
                    kg.entity_name(self.pairs[pair].neighbor)
                ),
                NodeKind::Video { utterance } => format!("NODE {i} video {utterance}"),
                NodeKind::Audio { utterance } => format!("NODE {i} audio {utterance}"),
            };
            out.push_str(&line);
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&format!("EDGE {} {} {}\n", e.a, e.b, e.family.name()));
        }
        out
    }
}

/// Node list and initial features in canonical order.
pub fn assemble_nodes(
    sample: &Sample,
    pairs: &[KnowledgePair],
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
) -> Result<(Vec<NodeKind>, Matrix), GraphError> {
    let dim = provider.dim();
    let dim_err = |message: String| GraphError::Dimension {
        sample_id: sample.id.clone(),
        message,
    };
    for (name, m) in [("video", &sample.video_feats), ("audio", &sample.audio_feats)] {
        if m.shape() != (sample.n_utterances(), dim) {
            return Err(dim_err(format!(
                "{name} features are {:?}, provider width is {dim}",
                m.shape()
            )));
        }
    }
    let n = sample.n_utterances();
    let total = sample.n_tokens() + 2 * pairs.len() + 2 * n;
    let mut nodes = Vec::with_capacity(total);
    let mut data = Vec::with_capacity(total * dim);
    let push_embed = |text: &str, data: &mut Vec<f64>| -> Result<(), GraphError> {
        let v = provider.embed(text).map_err(|source| GraphError::Provider {
            sample_id: sample.id.clone(),
            source,
        })?;
        if v.len() != dim {
            return Err(dim_err(format!("provider returned {} values for {text:?}", v.len())));
        }
        data.extend(v);
        Ok(())
    };

    for (u, utt) in sample.utterances.iter().enumerate() {
        for (t, tok) in utt.iter().enumerate() {
            nodes.push(NodeKind::Token {
                utterance: u,
                index: t,
            });
            push_embed(tok, &mut data)?;
        }
    }
    for (k, p) in pairs.iter().enumerate() {
        nodes.push(NodeKind::KnowRel { pair: k });
        push_embed(kg.relation_name(p.relation), &mut data)?;
        nodes.push(NodeKind::KnowEnt { pair: k });
        push_embed(kg.entity_name(p.neighbor), &mut data)?;
    }
    for j in 0..n {
        nodes.push(NodeKind::Video { utterance: j });
        data.extend_from_slice(sample.video_feats.row(j));
    }
    for j in 0..n {
        nodes.push(NodeKind::Audio { utterance: j });
        data.extend_from_slice(sample.audio_feats.row(j));
    }
    let features = Matrix::from_vec(nodes.len(), dim, data).expect("rows have provider width");
    Ok((nodes, features))
}

struct Positions {
    tokens: Vec<usize>,
    utterance_tokens: Vec<Vec<usize>>,
    rel: Vec<usize>,
    ent: Vec<usize>,
    video: Vec<usize>,
    audio: Vec<usize>,
}

fn positions(nodes: &[NodeKind], n_utterances: usize) -> Positions {
    let mut p = Positions {
        tokens: Vec::new(),
        utterance_tokens: vec![Vec::new(); n_utterances],
        rel: Vec::new(),
        ent: Vec::new(),
        video: Vec::new(),
        audio: Vec::new(),
    };
    for (i, kind) in nodes.iter().enumerate() {
        match *kind {
            NodeKind::Token { utterance, .. } => {
                p.tokens.push(i);
                p.utterance_tokens[utterance].push(i);
            }
            NodeKind::KnowRel { .. } => p.rel.push(i),
            NodeKind::KnowEnt { .. } => p.ent.push(i),
            NodeKind::Video { .. } => p.video.push(i),
            NodeKind::Audio { .. } => p.audio.push(i),
        }
    }
    p
}

fn chain(ids: &[usize], family: EdgeFamily, out: &mut Vec<Edge>) {
    out.extend(ids.windows(2).map(|w| Edge {
        a: w[0],
        b: w[1],
        family,
    }));
}

/// Intra-modal edges over a full (unfiltered) node list.
pub fn build_intra_edges(
    nodes: &[NodeKind],
    sample: &Sample,
    pairs: &[KnowledgePair],
    anchors: &[AnchorMatch],
) -> Vec<Edge> {
    let pos = positions(nodes, sample.n_utterances());
    let mut edges = Vec::new();
    chain(&pos.tokens, EdgeFamily::TokenChain, &mut edges);
    for (k, pair) in pairs.iter().enumerate() {
        let (rel, ent) = (pos.rel[k], pos.ent[k]);
        for t in anchors[pair.anchor_index].token_span.clone() {
            edges.push(Edge {
                a: pos.tokens[t],
                b: rel,
                family: EdgeFamily::TokenKnowledge,
            });
        }
        edges.push(Edge {
            a: rel,
            b: ent,
            family: EdgeFamily::KnowledgeChain,
        });
    }
    chain(&pos.video, EdgeFamily::VideoChain, &mut edges);
    chain(&pos.audio, EdgeFamily::AudioChain, &mut edges);
    edges
}

/// Token-video and token-audio edges within each utterance.
pub fn build_inter_edges(nodes: &[NodeKind], sample: &Sample) -> Vec<Edge> {
    let pos = positions(nodes, sample.n_utterances());
    let mut edges = Vec::new();
    for (j, toks) in pos.utterance_tokens.iter().enumerate() {
        for &t in toks {
            edges.push(Edge {
                a: t,
                b: pos.video[j],
                family: EdgeFamily::TokenVideo,
            });
        }
    }
    for (j, toks) in pos.utterance_tokens.iter().enumerate() {
        for &t in toks {
            edges.push(Edge {
                a: t,
                b: pos.audio[j],
                family: EdgeFamily::TokenAudio,
            });
        }
    }
    edges
}

fn normalize(n: usize, neighbors: &[BTreeSet<usize>]) -> (SparseMatrix, SparseMatrix) {
    let inv_sqrt: Vec<f64> = neighbors
        .iter()
        .map(|s| 1.0 / (s.len() as f64).sqrt())
        .collect();
    let a_rows = neighbors
        .iter()
        .map(|s| s.iter().map(|&c| (c, 1.0)).collect())
        .collect();
    let norm_rows = neighbors
        .iter()
        .enumerate()
        .map(|(r, s)| s.iter().map(|&c| (c, inv_sqrt[r] * inv_sqrt[c])).collect())
        .collect();
    (
        SparseMatrix::from_row_lists(n, a_rows).expect("set-backed rows"),
        SparseMatrix::from_row_lists(n, norm_rows).expect("set-backed rows"),
    )
}

/// OR of both edge sets plus self-loops, and its symmetric normalization.
///
/// Panics if an edge endpoint is `>= n_nodes`.
pub fn combine_normalize(intra: &[Edge], inter: &[Edge], n_nodes: usize) -> (SparseMatrix, SparseMatrix) {
    let mut neighbors: Vec<BTreeSet<usize>> = (0..n_nodes).map(|i| BTreeSet::from([i])).collect();
    for e in intra.iter().chain(inter) {
        assert!(e.a < n_nodes && e.b < n_nodes, "edge endpoint out of range");
        neighbors[e.a].insert(e.b);
        neighbors[e.b].insert(e.a);
    }
    normalize(n_nodes, &neighbors)
}

fn complete(n: usize) -> (SparseMatrix, SparseMatrix) {
    let neighbors: Vec<BTreeSet<usize>> = (0..n).map(|_| (0..n).collect()).collect();
    normalize(n, &neighbors)
}

/// Builds the graph for one sample under one ablation variant.
pub fn build_graph(
    sample: &Sample,
    view: &KnowledgeView<'_>,
    provider: &dyn FeatureProvider,
    variant: Variant,
    cap_per_anchor: usize,
) -> Result<CrossModalGraph, GraphError> {
    if view.cutoff() != sample.call_date {
        return Err(GraphError::Cutoff {
            sample_id: sample.id.clone(),
            cutoff: view.cutoff(),
            call_date: sample.call_date,
        });
    }
    let kg = view.graph();
    let anchors = view.link_entities(&sample.flat_tokens());
    let pairs = view.retrieve_knowledge(&anchors, cap_per_anchor);
    let (full_nodes, full_features) = assemble_nodes(sample, &pairs, kg, provider)?;
    let intra = build_intra_edges(&full_nodes, sample, &pairs, &anchors);
    let inter = build_inter_edges(&full_nodes, sample);

    let mut remap = vec![usize::MAX; full_nodes.len()];
    let mut nodes = Vec::new();
    let mut data = Vec::new();
    for (i, &kind) in full_nodes.iter().enumerate() {
        if variant.keeps(kind) {
            remap[i] = nodes.len();
            nodes.push(kind);
            data.extend_from_slice(full_features.row(i));
        }
    }
    if nodes.is_empty() {
        return Err(GraphError::Empty {
            sample_id: sample.id.clone(),
            variant,
        });
    }
    let n = nodes.len();
    let features = Matrix::from_vec(n, full_features.cols(), data).expect("kept rows");
    let keep = |e: &Edge| -> Option<Edge> {
        let (a, b) = (remap[e.a], remap[e.b]);
        (a != usize::MAX && b != usize::MAX).then_some(Edge { a, b, family: e.family })
    };
    let (edges, adjacency, norm_adjacency) = match variant {
        Variant::WithoutGraph => {
            let (a, na) = combine_normalize(&[], &[], n);
            (Vec::new(), a, na)
        }
        Variant::FullGraph => {
            let (a, na) = complete(n);
            (Vec::new(), a, na)
        }
        _ => {
            let intra: Vec<Edge> = intra.iter().filter_map(keep).collect();
            let inter: Vec<Edge> = inter.iter().filter_map(keep).collect();
            let (a, na) = combine_normalize(&intra, &inter, n);
            (intra.into_iter().chain(inter).collect(), a, na)
        }
    };
    Ok(CrossModalGraph {
        sample_id: sample.id.clone(),
        variant,
        nodes,
        features,
        edges,
        adjacency,
        norm_adjacency,
        pairs,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Grid, HashEmbed, Labels};
    use crate::kg_store::KnowledgeGraph;
    use chrono::NaiveDate;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn sample(utts: &[&[&str]], dim: usize) -> Sample {
        let n = utts.len();
        Sample {
            id: "s".into(),
            call_date: d("2020-01-15"),
            utterances: utts
                .iter()
                .map(|u| u.iter().map(|t| t.to_string()).collect())
                .collect(),
            video_feats: Matrix::from_vec(n, dim, (0..n * dim).map(|i| i as f64).collect()).unwrap(),
            audio_feats: Matrix::from_vec(n, dim, (0..n * dim).map(|i| -(i as f64)).collect()).unwrap(),
            labels: Labels {
                movement: Grid::filled(true),
                volatility: Grid::filled(1.0),
            },
        }
    }

    fn kg() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple("gold", "impact", "U.S. Dollar", d("2019-01-01")).unwrap();
        kg.add_triple("interest rate", "impact", "Stock Market", d("2019-01-01")).unwrap();
        kg.add_triple("gold", "raise", "Future Thing", d("2021-01-01")).unwrap();
        kg
    }

    fn edge_set(edges: &[Edge]) -> BTreeSet<(usize, usize)> {
        edges.iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect()
    }

    #[test]
    fn node_counts_and_order() {
        let provider = HashEmbed::new(4, 0);
        let kg = kg();
        let s = sample(&[&["hello", "world"]], 4);
        let (nodes, feats) = assemble_nodes(&s, &[], &kg, &provider).unwrap();
        assert_eq!(nodes.len(), 4);
        assert_eq!(feats.row(2), s.video_feats.row(0));
        assert_eq!(feats.row(3), s.audio_feats.row(0));

        let s = sample(&[&["gold", "rose"]], 4);
        let view = kg.view(s.call_date);
        let anchors = view.link_entities(&s.flat_tokens());
        let pairs = view.retrieve_knowledge(&anchors, 4);
        assert_eq!(pairs.len(), 1);
        let (nodes, feats) = assemble_nodes(&s, &pairs, &kg, &provider).unwrap();
        assert_eq!(
            nodes,
            vec![
                NodeKind::Token { utterance: 0, index: 0 },
                NodeKind::Token { utterance: 0, index: 1 },
                NodeKind::KnowRel { pair: 0 },
                NodeKind::KnowEnt { pair: 0 },
                NodeKind::Video { utterance: 0 },
                NodeKind::Audio { utterance: 0 },
            ]
        );
        assert_eq!(feats.row(2), provider.embed("impact").unwrap().as_slice());
        assert_eq!(feats.row(3), provider.embed("U.S. Dollar").unwrap().as_slice());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = sample(&[&["a"]], 4);
        let err = assemble_nodes(&s, &[], &kg(), &HashEmbed::new(8, 0)).unwrap_err();
        assert!(matches!(err, GraphError::Dimension { .. }));
    }

    #[test]
    fn intra_edges_small_cases() {
        let s = sample(&[&["a", "b", "c"]], 2);
        let (nodes, _) = assemble_nodes(&s, &[], &kg(), &HashEmbed::new(2, 0)).unwrap();
        let e = build_intra_edges(&nodes, &s, &[], &[]);
        assert_eq!(edge_set(&e), BTreeSet::from([(0, 1), (1, 2)]));

        let s = sample(&[&["a"], &["b"]], 2);
        let (nodes, _) = assemble_nodes(&s, &[], &kg(), &HashEmbed::new(2, 0)).unwrap();
        let e = build_intra_edges(&nodes, &s, &[], &[]);
        let count = |f| e.iter().filter(|x| x.family == f).count();
        assert_eq!(count(EdgeFamily::VideoChain), 1);
        assert_eq!(count(EdgeFamily::AudioChain), 1);
    }

    #[test]
    fn multi_token_anchor_attaches_every_span_token() {
        let kg = kg();
        let s = sample(&[&["the", "interest", "rate", "rose"]], 2);
        let view = kg.view(s.call_date);
        let anchors = view.link_entities(&s.flat_tokens());
        assert_eq!(anchors[0].token_span, 1..3);
        let pairs = view.retrieve_knowledge(&anchors, 4);
        let (nodes, _) = assemble_nodes(&s, &pairs, &kg, &HashEmbed::new(2, 0)).unwrap();
        let e = build_intra_edges(&nodes, &s, &pairs, &anchors);
        let know: BTreeSet<_> = edge_set(
            &e.iter()
                .copied()
                .filter(|x| matches!(x.family, EdgeFamily::TokenKnowledge | EdgeFamily::KnowledgeChain))
                .collect::<Vec<_>>(),
        );
        // tokens 0..4, rel = 4, ent = 5
        assert_eq!(know, BTreeSet::from([(1, 4), (2, 4), (4, 5)]));
    }

    #[test]
    fn inter_edges_count() {
        let s = sample(&[&["a", "b"], &["c", "d", "e"]], 2);
        let (nodes, _) = assemble_nodes(&s, &[], &kg(), &HashEmbed::new(2, 0)).unwrap();
        let e = build_inter_edges(&nodes, &s);
        assert_eq!(e.len(), 10);
        let s = sample(&[&["a", "b", "c"]], 2);
        let (nodes, _) = assemble_nodes(&s, &[], &kg(), &HashEmbed::new(2, 0)).unwrap();
        let e = build_inter_edges(&nodes, &s);
        assert_eq!(e.iter().filter(|x| x.family == EdgeFamily::TokenVideo).count(), 3);
        assert_eq!(e.iter().filter(|x| x.family == EdgeFamily::TokenAudio).count(), 3);
    }

    #[test]
    fn inter_edges_never_touch_knowledge() {
        let kg = kg();
        let s = sample(&[&["gold", "x"], &["interest", "rate"]], 2);
        let g = build_graph(&s, &kg.view(s.call_date), &HashEmbed::new(2, 0), Variant::Full, 4).unwrap();
        for e in g.edges.iter().filter(|e| !e.family.is_intra()) {
            assert!(!g.nodes[e.a].is_knowledge() && !g.nodes[e.b].is_knowledge());
        }
    }

    #[test]
    fn normalization_hand_cases() {
        let (a, na) = combine_normalize(&[], &[], 1);
        assert_eq!(a.to_dense(), Matrix::from_rows(&[[1.0]]));
        assert_eq!(na.to_dense(), Matrix::from_rows(&[[1.0]]));

        let e = |a, b| Edge { a, b, family: EdgeFamily::TokenChain };
        let (_, na) = combine_normalize(&[e(0, 1)], &[], 2);
        for r in 0..2 {
            for c in 0..2 {
                assert!((na.get(r, c) - 0.5).abs() < 1e-15);
            }
        }
        let (_, na) = combine_normalize(&[e(0, 1), e(1, 2)], &[], 3);
        assert!((na.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((na.get(0, 1) - 0.40825).abs() < 1e-5);
        assert!((na.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(na.get(0, 2), 0.0);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let e = Edge { a: 0, b: 1, family: EdgeFamily::TokenChain };
        let f = Edge { a: 1, b: 0, family: EdgeFamily::TokenVideo };
        let (a, _) = combine_normalize(&[e, e], &[f], 2);
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn variants() {
        let kg = kg();
        let s = sample(&[&["gold", "x"], &["y"]], 2);
        let view = kg.view(s.call_date);
        let p = HashEmbed::new(2, 0);
        let full = build_graph(&s, &view, &p, Variant::Full, 4).unwrap();
        assert_eq!(full.n_nodes(), 3 + 2 * 1 + 2 * 2);

        let wk = build_graph(&s, &view, &p, Variant::WithoutKnowledge, 4).unwrap();
        assert_eq!(wk.n_nodes(), 3 + 2 * 2);
        assert!(wk.nodes.iter().all(|k| !k.is_knowledge()));

        let wt = build_graph(&s, &view, &p, Variant::WithoutText, 4).unwrap();
        assert_eq!(wt.n_nodes(), 4);
        assert_eq!(wt.readout_nodes(), vec![0, 1, 2, 3]);

        let wv = build_graph(&s, &view, &p, Variant::WithoutVideo, 4).unwrap();
        assert_eq!(wv.n_nodes(), 7);
        assert!(wv.edges.iter().all(|e| e.family != EdgeFamily::TokenVideo));
        let wa = build_graph(&s, &view, &p, Variant::WithoutAudio, 4).unwrap();
        assert_eq!(wa.n_nodes(), 7);

        let wg = build_graph(&s, &view, &p, Variant::WithoutGraph, 4).unwrap();
        assert_eq!(wg.norm_adjacency.to_dense(), Matrix::identity(9));

        let s4 = sample(&[&["x", "y"]], 2);
        let fg = build_graph(&s4, &kg.view(s4.call_date), &p, Variant::FullGraph, 4).unwrap();
        assert_eq!(fg.n_nodes(), 4);
        let dense = fg.norm_adjacency.to_dense();
        assert!(dense.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn future_knowledge_excluded() {
        let kg = kg();
        let s = sample(&[&["gold"]], 2);
        let g = build_graph(&s, &kg.view(s.call_date), &HashEmbed::new(2, 0), Variant::Full, 4).unwrap();
        assert_eq!(g.pairs.len(), 1);
        assert!(g.pairs.iter().all(|p| p.timestamp < s.call_date));
    }

    #[test]
    fn cutoff_must_equal_call_date() {
        let kg = kg();
        let s = sample(&[&["gold"]], 2);
        let err = build_graph(&s, &kg.view(d("2030-01-01")), &HashEmbed::new(2, 0), Variant::Full, 4)
            .unwrap_err();
        assert!(matches!(err, GraphError::Cutoff { .. }));
    }

    #[test]
    fn dump_format() {
        let kg = kg();
        let s = sample(&[&["gold", "x"]], 2);
        let g = build_graph(&s, &kg.view(s.call_date), &HashEmbed::new(2, 0), Variant::Full, 4).unwrap();
        let expected = "\
GRAPH s full nodes=6 edges=7 nnz=20
NODE 0 token 0 0 gold
NODE 1 token 0 1 x
NODE 2 know_rel 0 impact
NODE 3 know_ent 0 U.S. Dollar
NODE 4 video 0
NODE 5 audio 0
EDGE 0 1 token_chain
EDGE 0 2 token_knowledge
EDGE 2 3 knowledge_chain
EDGE 0 4 token_video
EDGE 1 4 token_video
EDGE 0 5 token_audio
EDGE 1 5 token_audio
";
        assert_eq!(g.dump(&s, &kg), expected);
    }
}
