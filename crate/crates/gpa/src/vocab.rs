//! The shared discrete token space.
//!
//! Every task (ASR, TTS, VC) is expressed over one vocabulary made of
//! contiguous, disjoint ID partitions: text bytes, two semantic streams,
//! acoustic tokens, global (speaker) tokens, and control tokens. The model
//! has a single embedding table and a single output head over this space;
//! task switching happens purely through token composition.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token identifier within a [`VocabLayout`].
pub type TokenId = u32;

/// The six partition families, in their fixed layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartitionKind {
    Text,
    GlmSemantic,
    BiSemantic,
    Acoustic,
    Global,
    Control,
}

impl PartitionKind {
    pub const ALL: [PartitionKind; 6] = [
        PartitionKind::Text,
        PartitionKind::GlmSemantic,
        PartitionKind::BiSemantic,
        PartitionKind::Acoustic,
        PartitionKind::Global,
        PartitionKind::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Text => "text",
            PartitionKind::GlmSemantic => "glm_semantic",
            PartitionKind::BiSemantic => "bi_semantic",
            PartitionKind::Acoustic => "acoustic",
            PartitionKind::Global => "global",
            PartitionKind::Control => "control",
        }
    }
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One contiguous ID range `[start, start + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub kind: PartitionKind,
    pub start: TokenId,
    pub size: u32,
}

impl Partition {
    pub fn contains(&self, id: TokenId) -> bool {
        id >= self.start && id < self.start + self.size
    }

    pub fn end(&self) -> TokenId {
        self.start + self.size
    }
}

/// The eight named control tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlToken {
    Bos,
    Eos,
    Sep,
    Gen,
    TaskTts,
    TaskAsr,
    TaskVc,
    Pad,
}

impl ControlToken {
    pub const ALL: [ControlToken; 8] = [
        ControlToken::Bos,
        ControlToken::Eos,
        ControlToken::Sep,
        ControlToken::Gen,
        ControlToken::TaskTts,
        ControlToken::TaskAsr,
        ControlToken::TaskVc,
        ControlToken::Pad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlToken::Bos => "BOS",
            ControlToken::Eos => "EOS",
            ControlToken::Sep => "SEP",
            ControlToken::Gen => "GEN",
            ControlToken::TaskTts => "TASK_TTS",
            ControlToken::TaskAsr => "TASK_ASR",
            ControlToken::TaskVc => "TASK_VC",
            ControlToken::Pad => "PAD",
        }
    }
}

impl fmt::Display for ControlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Requested size for each partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub text: u32,
    pub glm_semantic: u32,
    pub bi_semantic: u32,
    pub acoustic: u32,
    pub global: u32,
    pub control: u32,
}

impl VocabConfig {
    fn size_of(&self, kind: PartitionKind) -> u32 {
        match kind {
            PartitionKind::Text => self.text,
            PartitionKind::GlmSemantic => self.glm_semantic,
            PartitionKind::BiSemantic => self.bi_semantic,
            PartitionKind::Acoustic => self.acoustic,
            PartitionKind::Global => self.global,
            PartitionKind::Control => self.control,
        }
    }
}

impl Default for VocabConfig {
    /// Desk-scale defaults: byte-level text plus non-degenerate speech partitions.
    fn default() -> Self {
        VocabConfig {
            text: 256,
            glm_semantic: 512,
            bi_semantic: 512,
            acoustic: 1024,
            global: 64,
            control: 16,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("partition {0} has size 0")]
    ZeroPartition(PartitionKind),
    #[error("control partition holds {got} ids but {need} named controls exist")]
    ControlOverflow { got: u32, need: u32 },
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    OutOfVocab { id: TokenId, vocab: u32 },
    #[error("layout invariant violated: {0}")]
    BadLayout(String),
}

/// The complete partitioned vocabulary.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabLayout {
    partitions: Vec<Partition>,
    control_ids: [TokenId; 8],
    total: u32,
}

/// Builds the layout with partitions packed contiguously from 0 in the
/// fixed [`PartitionKind::ALL`] order. Deterministic given the config.
pub fn build_vocab(config: &VocabConfig) -> Result<VocabLayout, VocabError> {
    let need = ControlToken::ALL.len() as u32;
    if config.control < need {
        return Err(VocabError::ControlOverflow {
            got: config.control,
            need,
        });
    }
    let mut partitions = Vec::with_capacity(PartitionKind::ALL.len());
    let mut cursor: u32 = 0;
    for kind in PartitionKind::ALL {
        let size = config.size_of(kind);
        if size == 0 {
            return Err(VocabError::ZeroPartition(kind));
        }
        partitions.push(Partition {
            kind,
            start: cursor,
            size,
        });
        cursor += size;
    }
    let control_start = partitions.last().unwrap().start;
    let mut control_ids = [0; 8];
    for (i, slot) in control_ids.iter_mut().enumerate() {
        *slot = control_start + i as u32;
    }
    Ok(VocabLayout {
        partitions,
        control_ids,
        total: cursor,
    })
}

impl VocabLayout {
    pub fn total_size(&self) -> u32 {
        self.total
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition(&self, kind: PartitionKind) -> &Partition {
        // one partition per kind by construction
        self.partitions.iter().find(|p| p.kind == kind).unwrap()
    }

    /// The unique partition containing `id`.
    pub fn partition_of(&self, id: TokenId) -> Result<PartitionKind, VocabError> {
        self.partitions
            .iter()
            .find(|p| p.contains(id))
            .map(|p| p.kind)
            .ok_or(VocabError::OutOfVocab {
                id,
                vocab: self.total,
            })
    }

    pub fn control(&self, tok: ControlToken) -> TokenId {
        self.control_ids[ControlToken::ALL.iter().position(|&c| c == tok).unwrap()]
    }

    /// Inverse of [`Self::control`] for ids inside the control partition.
    pub fn control_of(&self, id: TokenId) -> Option<ControlToken> {
        self.control_ids
            .iter()
            .position(|&c| c == id)
            .map(|i| ControlToken::ALL[i])
    }

    /// Absolute id for a partition-relative offset.
    pub fn abs(&self, kind: PartitionKind, rel: u32) -> Result<TokenId, VocabError> {
        let p = self.partition(kind);
        if rel >= p.size {
            return Err(VocabError::OutOfVocab {
                id: p.start + rel,
                vocab: self.total,
            });
        }
        Ok(p.start + rel)
    }

    /// Partition-relative offset of an absolute id known to live in `kind`.
    pub fn rel(&self, kind: PartitionKind, id: TokenId) -> Result<u32, VocabError> {
        let p = self.partition(kind);
        if !p.contains(id) {
            return Err(VocabError::OutOfVocab {
                id,
                vocab: self.total,
            });
        }
        Ok(id - p.start)
    }

    /// Stable identifier derived from the partition sizes, used to tag token
    /// sequences and checkpoints with the layout they were produced under.
    pub fn fingerprint(&self) -> LayoutId {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.partitions {
            for b in (p.size as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        LayoutId(h)
    }

    /// Serializes to the checkpoint-adjacent JSON document.
    pub fn to_json(&self) -> String {
        let doc = LayoutDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("layout serializes")
    }

    /// Parses and re-validates a layout document.
    pub fn from_json(text: &str) -> Result<VocabLayout, VocabError> {
        let doc: LayoutDoc = serde_json::from_str(text)
            .map_err(|e| VocabError::BadLayout(format!("malformed layout JSON: {e}")))?;
        doc.into_layout()
    }
}

/// Opaque layout fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutId(pub u64);

impl fmt::Display for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionDoc {
    start: u32,
    size: u32,
}

/// On-disk schema: `{partition_name: {start, size}, control_map: {...}}`.
#[derive(Serialize, Deserialize)]
struct LayoutDoc {
    #[serde(flatten)]
    partitions: BTreeMap<String, PartitionDoc>,
    control_map: BTreeMap<String, u32>,
}

impl From<&VocabLayout> for LayoutDoc {
    fn from(layout: &VocabLayout) -> Self {
        let partitions = layout
            .partitions
            .iter()
            .map(|p| {
                (
                    p.kind.name().to_string(),
                    PartitionDoc {
                        start: p.start,
                        size: p.size,
                    },
                )
            })
            .collect();
        let control_map = ControlToken::ALL
            .iter()
            .map(|&c| (c.name().to_string(), layout.control(c)))
            .collect();
        LayoutDoc {
            partitions,
            control_map,
        }
    }
}

impl LayoutDoc {
    fn into_layout(self) -> Result<VocabLayout, VocabError> {
        let mut config = VocabConfig::default();
        let mut starts: BTreeMap<PartitionKind, u32> = BTreeMap::new();
        for kind in PartitionKind::ALL {
            let doc = self
                .partitions
                .get(kind.name())
                .ok_or_else(|| VocabError::BadLayout(format!("missing partition {kind}")))?;
            starts.insert(kind, doc.start);
            match kind {
                PartitionKind::Text => config.text = doc.size,
                PartitionKind::GlmSemantic => config.glm_semantic = doc.size,
                PartitionKind::BiSemantic => config.bi_semantic = doc.size,
                PartitionKind::Acoustic => config.acoustic = doc.size,
                PartitionKind::Global => config.global = doc.size,
                PartitionKind::Control => config.control = doc.size,
            }
        }
        let layout = build_vocab(&config)?;
        // the rebuilt layout must agree with the stored starts and controls
        for p in &layout.partitions {
            if starts[&p.kind] != p.start {
                return Err(VocabError::BadLayout(format!(
                    "partition {} starts at {} but layout order requires {}",
                    p.kind, starts[&p.kind], p.start
                )));
            }
        }
        for c in ControlToken::ALL {
            match self.control_map.get(c.name()) {
                Some(&id) if id == layout.control(c) => {}
                Some(&id) => {
                    return Err(VocabError::BadLayout(format!(
                        "control {c} maps to {id}, expected {}",
                        layout.control(c)
                    )))
                }
                None => return Err(VocabError::BadLayout(format!("missing control {c}"))),
            }
        }
        Ok(layout)
    }
}

/// A token sequence validated against a specific layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    pub layout: LayoutId,
}

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>, layout: &VocabLayout) -> Result<TokenSeq, VocabError> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= layout.total_size()) {
            return Err(VocabError::OutOfVocab {
                id: bad,
                vocab: layout.total_size(),
            });
        }
        Ok(TokenSeq {
            ids,
            layout: layout.fingerprint(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// What a grammar slot accepts: a specific control token or any id from a
/// partition family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenPattern {
    Control(ControlToken),
    Kind(PartitionKind),
}

impl TokenPattern {
    fn matches(&self, layout: &VocabLayout, id: TokenId) -> bool {
        match self {
            TokenPattern::Control(c) => layout.control(*c) == id,
            TokenPattern::Kind(k) => layout
                .partition_of(id)
                .map(|got| got == *k)
                .unwrap_or(false),
        }
    }
}

impl fmt::Display for TokenPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenPattern::Control(c) => write!(f, "{c}"),
            TokenPattern::Kind(k) => write!(f, "<{k}>"),
        }
    }
}

/// One grammar element: a group of patterns repeated a bounded or unbounded
/// number of times. Matching is greedy, which is unambiguous here because no
/// task grammar follows a repeated group with a pattern that could also start
/// that group.
#[derive(Debug, Clone)]
pub struct GrammarElem {
    pub group: Vec<TokenPattern>,
    pub min_reps: usize,
    pub unbounded: bool,
}

impl GrammarElem {
    pub fn one(p: TokenPattern) -> GrammarElem {
        GrammarElem {
            group: vec![p],
            min_reps: 1,
            unbounded: false,
        }
    }

    pub fn exactly(group: Vec<TokenPattern>, reps: usize) -> GrammarElem {
        GrammarElem {
            group,
            min_reps: reps,
            unbounded: false,
        }
    }

    pub fn at_least(group: Vec<TokenPattern>, min: usize) -> GrammarElem {
        GrammarElem {
            group,
            min_reps: min,
            unbounded: true,
        }
    }
}

/// A regular pattern over partition kinds and control tokens.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub name: &'static str,
    pub elems: Vec<GrammarElem>,
}

/// First point at which a sequence departs from a grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub expected: String,
    pub got: Option<TokenId>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.got {
            Some(id) => write!(
                f,
                "token {} at index {} does not match {}",
                id, self.index, self.expected
            ),
            None => write!(
                f,
                "sequence ends at index {} where {} was expected",
                self.index, self.expected
            ),
        }
    }
}

/// Checks `seq` against `grammar`, reporting the first offending index.
/// A violation is a regular return value, not a fault.
pub fn validate_sequence(
    layout: &VocabLayout,
    seq: &TokenSeq,
    grammar: &Grammar,
) -> Result<(), Violation> {
    let ids = &seq.ids;
    let mut pos = 0usize;

    let mut fail = |pos: usize, pat: &TokenPattern| Violation {
        index: pos,
        expected: pat.to_string(),
        got: ids.get(pos).copied(),
    };

    for elem in &grammar.elems {
        let mut reps = 0usize;
        loop {
            // a repetition only counts if the whole group matches
            let group_fits = elem
                .group
                .iter()
                .enumerate()
                .all(|(i, p)| matches!(ids.get(pos + i), Some(&id) if p.matches(layout, id)));
            if group_fits {
                pos += elem.group.len();
                reps += 1;
                if !elem.unbounded && reps == elem.min_reps {
                    break;
                }
            } else {
                if reps < elem.min_reps {
                    // pinpoint the first pattern in the group that failed
                    let off = elem
                        .group
                        .iter()
                        .enumerate()
                        .position(|(i, p)| {
                            !matches!(ids.get(pos + i), Some(&id) if p.matches(layout, id))
                        })
                        .unwrap_or(0);
                    return Err(fail(pos + off, &elem.group[off]));
                }
                break;
            }
        }
    }
    if pos != ids.len() {
        return Err(Violation {
            index: pos,
            expected: "end of sequence".to_string(),
            got: Some(ids[pos]),
        });
    }
    Ok(())
}
