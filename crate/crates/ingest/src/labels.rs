use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub code: String,
    pub name: String,
    pub parent_code: Option<String>,
}

/// Hierarchical label codes.
///
/// Codes are indexed in depth-first order (roots and siblings in input
/// order); that order defines the layout of every [`LabelSet`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaxonomyNode>", into = "Vec<TaxonomyNode>")]
pub struct LabelTaxonomy {
    /// nodes in depth-first order
    nodes: Vec<TaxonomyNode>,
    index: HashMap<String, usize>,
    /// index into `roots()` of each node's top-level ancestor
    category: Vec<usize>,
    depth: Vec<usize>,
}

impl LabelTaxonomy {
    pub fn new(nodes: Vec<TaxonomyNode>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.code.is_empty() {
                return Err(IngestError::InvalidTaxonomy(format!("empty code on node {i}")));
            }
            if seen.insert(n.code.clone(), i).is_some() {
                return Err(IngestError::InvalidTaxonomy(format!("duplicate code `{}`", n.code)));
            }
        }
        let mut children: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            let parent = match &n.parent_code {
                None => None,
                Some(p) => Some(*seen.get(p).ok_or_else(|| {
                    IngestError::InvalidTaxonomy(format!("`{}` has unknown parent `{p}`", n.code))
                })?),
            };
            children.entry(parent).or_default().push(i);
        }
        let roots = children.get(&None).cloned().unwrap_or_default();
        if roots.is_empty() && !nodes.is_empty() {
            return Err(IngestError::InvalidTaxonomy("no root nodes".into()));
        }

        let mut order = Vec::with_capacity(nodes.len());
        let mut category = Vec::with_capacity(nodes.len());
        let mut depth = Vec::with_capacity(nodes.len());
        for (ci, &root) in roots.iter().enumerate() {
            let mut stack = vec![(root, 0usize)];
            while let Some((n, d)) = stack.pop() {
                order.push(n);
                category.push(ci);
                depth.push(d);
                if let Some(kids) = children.get(&Some(n)) {
                    stack.extend(kids.iter().rev().map(|&k| (k, d + 1)));
                }
            }
        }
        // nodes unreachable from a root sit on a parent cycle
        if order.len() != nodes.len() {
            return Err(IngestError::InvalidTaxonomy("parent links contain a cycle".into()));
        }
        let nodes: Vec<TaxonomyNode> = order.iter().map(|&i| nodes[i].clone()).collect();
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.code.clone(), i))
            .collect();
        Ok(Self {
            nodes,
            index,
            category,
            depth,
        })
    }

    /// Reads `code<TAB>name<TAB>parent_code` lines; blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let code = cols.next().unwrap_or("").trim().to_string();
            let name = cols
                .next()
                .ok_or_else(|| {
                    IngestError::InvalidTaxonomy(format!("line {}: expected code<TAB>name", lineno + 1))
                })?
                .trim()
                .to_string();
            let parent = cols.next().map(str::trim).filter(|p| !p.is_empty());
            nodes.push(TaxonomyNode {
                code,
                name,
                parent_code: parent.map(str::to_string),
            });
        }
        Self::new(nodes)
    }

    pub fn render(&self) -> String {
        self.nodes
            .iter()
            .map(|n| {
                format!(
                    "{}\t{}\t{}\n",
                    n.code,
                    n.name,
                    n.parent_code.as_deref().unwrap_or("")
                )
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.code.as_str())
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn roots(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.iter().filter(|n| n.parent_code.is_none())
    }

    /// Top-level category index of the node at `index`.
    pub fn category_of(&self, index: usize) -> usize {
        self.category[index]
    }

    pub fn depth_of(&self, index: usize) -> usize {
        self.depth[index]
    }

    /// A small event taxonomy with the codes used in the sample data.
    pub fn default_events() -> Self {
        let rows: &[(&str, &str, Option<&str>)] = &[
            ("A", "Arcing and Contact Faults", None),
            ("EA", "Arching", Some("A")),
            ("OU", "Jumper Failure", Some("A")),
            ("I", "Interrupting Devices", None),
            ("IF", "Interrupting Devices - Fuse", Some("I")),
            ("D", "Equipment Condition", None),
            ("DE", "Equipment Deterioration", Some("D")),
            ("TN", "Non-specific Transformer Failure", Some("D")),
            ("EN", "Non-specific Equipment Failure", Some("D")),
            ("S", "System Conditions", None),
            ("SG", "Voltage Sag", Some("S")),
            ("CT", "Capacitor Transient", Some("S")),
            ("CS", "Capacitor Switching", Some("S")),
        ];
        Self::new(
            rows.iter()
                .map(|(c, n, p)| TaxonomyNode {
                    code: c.to_string(),
                    name: n.to_string(),
                    parent_code: p.map(str::to_string),
                })
                .collect(),
        )
        .expect("built-in taxonomy is valid")
    }
}

impl TryFrom<Vec<TaxonomyNode>> for LabelTaxonomy {
    type Error = IngestError;

    fn try_from(nodes: Vec<TaxonomyNode>) -> Result<Self> {
        Self::new(nodes)
    }
}

impl From<LabelTaxonomy> for Vec<TaxonomyNode> {
    fn from(t: LabelTaxonomy) -> Self {
        t.nodes
    }
}

/// Presence vector over taxonomy codes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub bits: Vec<u8>,
    /// codes present, in taxonomy order
    pub codes: Vec<String>,
}

impl LabelSet {
    pub fn empty(taxonomy: &LabelTaxonomy) -> Self {
        Self {
            bits: vec![0; taxonomy.len()],
            codes: Vec::new(),
        }
    }

    pub fn from_codes<'a>(
        codes: impl IntoIterator<Item = &'a str>,
        taxonomy: &LabelTaxonomy,
    ) -> (Self, Vec<String>) {
        let mut bits = vec![0u8; taxonomy.len()];
        let mut unknown = Vec::new();
        for code in codes {
            match taxonomy.index_of(code) {
                Some(i) => bits[i] = 1,
                None => {
                    if !unknown.iter().any(|u| u == code) {
                        unknown.push(code.to_string());
                    }
                }
            }
        }
        let codes = taxonomy
            .codes()
            .zip(&bits)
            .filter(|(_, &b)| b == 1)
            .map(|(c, _)| c.to_string())
            .collect();
        (Self { bits, codes }, unknown)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.bits.get(index) == Some(&1)
    }

    /// Codes joined with `|`, the inverse of [`parse_label_tags`].
    pub fn render(&self) -> String {
        self.codes.join("|")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTags {
    pub labels: LabelSet,
    /// codes absent from the taxonomy
    pub warnings: Vec<String>,
}

pub const TAG_DELIMITERS: [char; 3] = ['|', ',', ';'];

/// Splits a raw annotation on `|`, `,` or `;` and maps codes onto the
/// taxonomy. Unknown codes are reported, never fatal.
pub fn parse_label_tags(tag_string: &str, taxonomy: &LabelTaxonomy) -> ParsedTags {
    parse_label_tags_with(tag_string, taxonomy, &TAG_DELIMITERS)
}

pub fn parse_label_tags_with(
    tag_string: &str,
    taxonomy: &LabelTaxonomy,
    delimiters: &[char],
) -> ParsedTags {
    let tokens = tag_string
        .split(|c| delimiters.contains(&c))
        .map(str::trim)
        .filter(|t| !t.is_empty());
    let (labels, warnings) = LabelSet::from_codes(tokens, taxonomy);
    ParsedTags { labels, warnings }
}
