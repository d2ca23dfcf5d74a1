//! The hierarchical service classification: a single rooted tree of codes
//! whose child values sum to their parent, the 27-code complete set from
//! which every aggregate can be rebuilt, parent-child sum verification,
//! leaf-to-ancestor rollup, and missing-value statistics.
//!
//! Only the summable classification is modeled; a file describing an
//! overlapping decomposition (a code with two parents, inconsistent layers)
//! is rejected at parse time.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::ExportPanel;

#[derive(Debug, Clone)]
pub struct TaxonomyNode {
    pub code: String,
    pub description: String,
    pub layer: u32,
    pub complete_set: bool,
    parent: Option<usize>,
    children: Vec<usize>,
}

/// A validated classification tree.
#[derive(Debug, Clone)]
pub struct TaxonomyTree {
    nodes: Vec<TaxonomyNode>,
    index: HashMap<String, usize>,
    root: usize,
}

impl PartialEq for TaxonomyTree {
    fn eq(&self, other: &Self) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(other.nodes.iter()).all(|(a, b)| {
                a.code == b.code
                    && a.description == b.description
                    && a.layer == b.layer
                    && a.complete_set == b.complete_set
                    && self.parent_code_of(a) == other.parent_code_of(b)
            })
    }
}

impl TaxonomyTree {
    pub fn parse(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), &path.display().to_string())
    }

    /// Parses the CSV schema `code,parent,layer,description,complete_set`
    /// (complete_set holds 0/1; exactly one row has an empty parent).
    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        {
            let headers = rdr
                .headers()
                .map_err(|e| Error::Parse {
                    origin: origin.into(),
                    line: 1,
                    message: e.to_string(),
                })?;
            let got: Vec<&str> = headers.iter().map(str::trim).collect();
            if got != ["code", "parent", "layer", "description", "complete_set"] {
                return Err(Error::Parse {
                    origin: origin.into(),
                    line: 1,
                    message: format!("unexpected taxonomy header {got:?}"),
                });
            }
        }

        let mut nodes: Vec<TaxonomyNode> = Vec::new();
        let mut parents: Vec<(Option<String>, u64)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                origin: origin.into(),
                line: 0,
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let perr = |message: String| Error::Parse {
                origin: origin.into(),
                line,
                message,
            };
            if record.len() != 5 {
                return Err(perr(format!("expected 5 fields, got {}", record.len())));
            }
            let code = record[0].trim().to_owned();
            if code.is_empty() {
                return Err(perr("empty code".into()));
            }
            let parent = record[1].trim();
            let layer: u32 = record[2]
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad layer {:?}", &record[2])))?;
            let complete_set = match record[4].trim() {
                "0" => false,
                "1" => true,
                other => return Err(perr(format!("complete_set must be 0 or 1, got {other:?}"))),
            };
            if index.contains_key(&code) {
                return Err(Error::Structure(format!(
                    "duplicate code {code:?} at {origin}:{line}"
                )));
            }
            index.insert(code.clone(), nodes.len());
            nodes.push(TaxonomyNode {
                code,
                description: record[3].trim().to_owned(),
                layer,
                complete_set,
                parent: None,
                children: Vec::new(),
            });
            parents.push((
                if parent.is_empty() {
                    None
                } else {
                    Some(parent.to_owned())
                },
                line,
            ));
        }

        if nodes.is_empty() {
            return Err(Error::Structure(format!("{origin}: no taxonomy rows")));
        }

        // Link parents, locate the single root.
        let mut root: Option<usize> = None;
        for (i, (parent, line)) in parents.iter().enumerate() {
            match parent {
                None => {
                    if let Some(r) = root {
                        return Err(Error::Structure(format!(
                            "multiple roots: {:?} and {:?}",
                            nodes[r].code, nodes[i].code
                        )));
                    }
                    root = Some(i);
                }
                Some(p) => {
                    let pi = *index.get(p).ok_or_else(|| {
                        Error::Structure(format!(
                            "unknown parent {p:?} at {origin}:{line}"
                        ))
                    })?;
                    nodes[i].parent = Some(pi);
                }
            }
        }
        let root = root.ok_or_else(|| Error::Structure("no root row (empty parent)".into()))?;
        for i in 0..nodes.len() {
            if let Some(pi) = nodes[i].parent {
                nodes[pi].children.push(i);
            }
        }

        let tree = TaxonomyTree { nodes, index, root };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        let root = &self.nodes[self.root];
        if root.layer != 0 {
            return Err(Error::Layer(format!(
                "root {:?} must sit at layer 0, declared {}",
                root.code, root.layer
            )));
        }
        // Every node reachable from the root exactly once; anything left
        // over sits on a cycle or a detached component.
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([self.root]);
        while let Some(i) = queue.pop_front() {
            if seen[i] {
                return Err(Error::Structure(format!(
                    "node {:?} reached twice",
                    self.nodes[i].code
                )));
            }
            seen[i] = true;
            for &ch in &self.nodes[i].children {
                let (p, c) = (&self.nodes[i], &self.nodes[ch]);
                if c.layer != p.layer + 1 {
                    return Err(Error::Layer(format!(
                        "{:?} declares layer {} under layer-{} parent {:?}",
                        c.code, c.layer, p.layer, p.code
                    )));
                }
                queue.push_back(ch);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Structure(format!(
                "node {:?} is not reachable from the root (cycle or detached edge)",
                self.nodes[i].code
            )));
        }
        // The complete set must cover every leaf exactly once.
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.children.is_empty() {
                continue;
            }
            let mut covering = 0;
            let mut cursor = Some(i);
            while let Some(j) = cursor {
                if self.nodes[j].complete_set {
                    covering += 1;
                }
                cursor = self.nodes[j].parent;
            }
            if covering == 0 {
                return Err(Error::Coverage(format!(
                    "leaf {:?} is not covered by any complete-set code",
                    n.code
                )));
            }
            if covering > 1 {
                return Err(Error::Coverage(format!(
                    "leaf {:?} is covered by {} overlapping complete-set codes",
                    n.code, covering
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| Error::Domain(format!("csv write failed: {e}"));
        wtr.write_record(["code", "parent", "layer", "description", "complete_set"])
            .map_err(io_err)?;
        for n in &self.nodes {
            wtr.write_record([
                n.code.as_str(),
                self.parent_code_of(n).unwrap_or(""),
                &n.layer.to_string(),
                n.description.as_str(),
                if n.complete_set { "1" } else { "0" },
            ])
            .map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<writer>", e))
    }

    fn parent_code_of(&self, node: &TaxonomyNode) -> Option<&str> {
        node.parent.map(|pi| self.nodes[pi].code.as_str())
    }

    pub fn root(&self) -> &TaxonomyNode {
        &self.nodes[self.root]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.iter()
    }

    pub fn node(&self, code: &str) -> Option<&TaxonomyNode> {
        self.index.get(code).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    pub fn children(&self, code: &str) -> Vec<&TaxonomyNode> {
        match self.index.get(code) {
            Some(&i) => self.nodes[i].children.iter().map(|&c| &self.nodes[c]).collect(),
            None => Vec::new(),
        }
    }

    pub fn parent(&self, code: &str) -> Option<&TaxonomyNode> {
        let &i = self.index.get(code)?;
        self.nodes[i].parent.map(|pi| &self.nodes[pi])
    }

    pub fn layer_of(&self, code: &str) -> Option<u32> {
        self.node(code).map(|n| n.layer)
    }

    pub fn is_leaf(&self, code: &str) -> bool {
        self.node(code).is_some_and(|n| n.children.is_empty())
    }

    /// Complete-set codes in file order.
    pub fn complete_set(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.complete_set)
            .map(|n| n.code.as_str())
            .collect()
    }

    /// Codes at the given layer, in file order.
    pub fn codes_at_layer(&self, layer: u32) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.layer == layer)
            .map(|n| n.code.as_str())
            .collect()
    }

    /// Complete-set node indices inside the subtree rooted at `i`
    /// (including `i` itself when marked).
    fn complete_below(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![i];
        while let Some(j) = stack.pop() {
            if self.nodes[j].complete_set {
                out.push(j);
                continue; // antichain: nothing marked below a marked node
            }
            stack.extend(self.nodes[j].children.iter().copied());
        }
        out.sort_unstable();
        out
    }
}

/// Verdict of one parent-vs-children-sum comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Parent or at least one child unobserved: no evidence either way.
    Skipped,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConsistencyRow {
    pub parent: String,
    pub country: String,
    pub year: i32,
    pub parent_value: Option<f64>,
    pub children_sum: Option<f64>,
    pub abs_diff: Option<f64>,
    pub rel_diff: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub rel_tol: f64,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn all_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail).count()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(
            w,
            "parent,country,year,parent_value,children_sum,abs_diff,rel_diff,verdict\n"
        )
        .map_err(io_err)?;
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            write!(
                w,
                "{},{},{},{},{},{},{},{}\n",
                r.parent,
                r.country,
                r.year,
                fmt(r.parent_value),
                fmt(r.children_sum),
                fmt(r.abs_diff),
                fmt(r.rel_diff),
                r.verdict.as_str()
            )
            .map_err(io_err)?;
        }
        Ok(())
    }
}

/// Compares every observed parent against the sum of its children.
///
/// A (parent, country, year) combination is judged only when the parent and
/// all of its children are present in the panel; everything else is
/// `SKIPPED`. The relative discrepancy is `abs_diff / max(|parent|, |sum|)`
/// (zero when both sides are zero).
pub fn check_sum_consistency(
    tree: &TaxonomyTree,
    panel: &ExportPanel,
    rel_tol: f64,
) -> ConsistencyReport {
    let mut rows = Vec::new();
    for parent in tree.nodes() {
        if parent.children.is_empty() {
            continue;
        }
        let Some(pi) = panel.activity_position(&parent.code) else {
            continue;
        };
        let child_pos: Vec<Option<usize>> = parent
            .children
            .iter()
            .map(|&c| panel.activity_position(&tree.nodes[c].code))
            .collect();
        for (ci, country) in panel.countries().iter().enumerate() {
            for (yi, &year) in panel.years().iter().enumerate() {
                let parent_value = panel.value(ci, pi, yi);
                let mut children_sum = Some(0.0f64);
                for cp in &child_pos {
                    match cp.and_then(|ai| panel.value(ci, ai, yi)) {
                        Some(v) => {
                            children_sum = children_sum.map(|s| s + v);
                        }
                        None => {
                            children_sum = None;
                            break;
                        }
                    }
                }
                let (abs_diff, rel_diff, verdict) = match (parent_value, children_sum) {
                    (Some(p), Some(s)) => {
                        let abs = (p - s).abs();
                        let denom = p.abs().max(s.abs());
                        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
                        let verdict = if rel <= rel_tol {
                            Verdict::Pass
                        } else {
                            Verdict::Fail
                        };
                        (Some(abs), Some(rel), verdict)
                    }
                    _ => (None, None, Verdict::Skipped),
                };
                rows.push(ConsistencyRow {
                    parent: parent.code.clone(),
                    country: country.clone(),
                    year,
                    parent_value,
                    children_sum,
                    abs_diff,
                    rel_diff,
                    verdict,
                });
            }
        }
    }
    ConsistencyReport { rel_tol, rows }
}

/// Extends the panel with every ancestor code, each cell recomputed as the
/// sum of its complete-set descendants. A parent cell is missing iff any
/// descendant is missing, so imputation is forced to operate on leaves.
/// Ancestor codes already present in the input are overwritten by the
/// recomputed sums; codes outside the tree pass through untouched.
pub fn rollup(tree: &TaxonomyTree, panel: &ExportPanel) -> Result<ExportPanel> {
    for code in tree.complete_set() {
        if panel.activity_position(code).is_none() {
            return Err(Error::Coverage(format!(
                "complete-set code {code:?} is absent from the panel"
            )));
        }
    }

    // Ancestors = non-complete nodes with complete-set descendants.
    let mut computed: Vec<(usize, Vec<usize>)> = Vec::new(); // (node idx, complete descendants)
    for i in 0..tree.nodes.len() {
        if tree.nodes[i].complete_set {
            continue;
        }
        let below = tree.complete_below(i);
        if !below.is_empty() {
            computed.push((i, below));
        }
    }

    let mut activities = panel.activities().to_vec();
    let existing: BTreeSet<&str> = panel.activities().iter().map(String::as_str).collect();
    let mut added: Vec<String> = computed
        .iter()
        .map(|(i, _)| tree.nodes[*i].code.clone())
        .filter(|c| !existing.contains(c.as_str()))
        .collect();
    added.sort();
    activities.extend(added);

    let mut out = ExportPanel::new_missing(
        panel.countries().to_vec(),
        activities,
        panel.years().to_vec(),
    )?;

    // Copy everything that is not recomputed.
    let recomputed: BTreeSet<&str> = computed
        .iter()
        .map(|(i, _)| tree.nodes[*i].code.as_str())
        .collect();
    for (ai, code) in panel.activities().iter().enumerate() {
        if recomputed.contains(code.as_str()) {
            continue;
        }
        let oi = out.activity_position(code).unwrap();
        for ci in 0..panel.countries().len() {
            for yi in 0..panel.years().len() {
                if let Some(v) = panel.value(ci, ai, yi) {
                    out.set(ci, oi, yi, v);
                }
            }
        }
    }

    // Fill the recomputed ancestors.
    for (i, below) in &computed {
        let oi = out.activity_position(&tree.nodes[*i].code).unwrap();
        let leaf_pos: Vec<usize> = below
            .iter()
            .map(|&j| panel.activity_position(&tree.nodes[j].code).unwrap())
            .collect();
        for ci in 0..panel.countries().len() {
            for yi in 0..panel.years().len() {
                let mut sum = 0.0;
                let mut complete = true;
                for &lp in &leaf_pos {
                    match panel.value(ci, lp, yi) {
                        Some(v) => sum += v,
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if complete {
                    out.set(ci, oi, yi, sum);
                }
            }
        }
    }
    Ok(out)
}

/// Grouping axis for [`missing_share`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    /// Per taxonomy layer, over all codes of that layer present in the
    /// panel.
    Layer,
    /// Per country, restricted to complete-set codes.
    Country,
    /// Per year, restricted to complete-set codes.
    Year,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingShare {
    pub key: String,
    pub missing: usize,
    pub total: usize,
    pub share: f64,
}

/// Fraction of missing cells per group. Only codes present in the panel
/// axis contribute; groups with no cells are omitted.
pub fn missing_share(panel: &ExportPanel, tree: &TaxonomyTree, group_by: GroupBy) -> Vec<MissingShare> {
    let complete_pos: Vec<usize> = tree
        .complete_set()
        .iter()
        .filter_map(|c| panel.activity_position(c))
        .collect();
    let (nc, _, ny) = panel.shape();
    let mut out = Vec::new();
    match group_by {
        GroupBy::Layer => {
            let mut layers: Vec<u32> = tree.nodes().map(|n| n.layer).collect();
            layers.sort_unstable();
            layers.dedup();
            for layer in layers {
                let pos: Vec<usize> = tree
                    .codes_at_layer(layer)
                    .iter()
                    .filter_map(|c| panel.activity_position(c))
                    .collect();
                if pos.is_empty() {
                    continue;
                }
                let mut missing = 0;
                for &ai in &pos {
                    for ci in 0..nc {
                        for yi in 0..ny {
                            if panel.is_missing(ci, ai, yi) {
                                missing += 1;
                            }
                        }
                    }
                }
                let total = pos.len() * nc * ny;
                out.push(MissingShare {
                    key: layer.to_string(),
                    missing,
                    total,
                    share: missing as f64 / total as f64,
                });
            }
        }
        GroupBy::Country => {
            if complete_pos.is_empty() {
                return out;
            }
            for (ci, country) in panel.countries().iter().enumerate() {
                let mut missing = 0;
                for &ai in &complete_pos {
                    for yi in 0..ny {
                        if panel.is_missing(ci, ai, yi) {
                            missing += 1;
                        }
                    }
                }
                let total = complete_pos.len() * ny;
                out.push(MissingShare {
                    key: country.clone(),
                    missing,
                    total,
                    share: missing as f64 / total as f64,
                });
            }
        }
        GroupBy::Year => {
            if complete_pos.is_empty() {
                return out;
            }
            for (yi, &year) in panel.years().iter().enumerate() {
                let mut missing = 0;
                for &ai in &complete_pos {
                    for ci in 0..nc {
                        if panel.is_missing(ci, ai, yi) {
                            missing += 1;
                        }
                    }
                }
                let total = complete_pos.len() * nc;
                out.push(MissingShare {
                    key: year.to_string(),
                    missing,
                    total,
                    share: missing as f64 / total as f64,
                });
            }
        }
    }
    out
}
