//! Category hierarchy construction and repair.
//!
//! Raw category graphs are cyclic and depth-inconsistent: a category's
//! parents can sit at different depths. Normalization first breaks cycles
//! with a deterministic depth-first traversal, then walks the DAG from the
//! root and, for every category, drops edges to parents below the maximal
//! parent level. The result is an acyclic, level-consistent hierarchy on
//! which ancestor and lowest-common-ancestor queries are cheap.
//!
//! Immutable after normalization; all queries are read-only.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatGraphError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("root category {0:?} not present in edge set")]
    MissingRoot(String),
    #[error("malformed TSV line {line}: {reason}")]
    MalformedTsv { line: usize, reason: String },
    #[error("unknown article {0:?}")]
    UnknownArticle(String),
    #[error("graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A `child childOf parent` edge.
pub type Edge = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalReason {
    CycleBackEdge,
    ParentBelowMaxLevel { parent_level: u32, max_level: u32 },
    ParentUnreachable,
    ChildUnreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub child: String,
    pub parent: String,
    pub reason: RemovalReason,
}

/// Normalization audit trail: every removed edge, every category left
/// without a level, and removed parent links that are no longer reachable
/// through intermediates (reported, never hidden).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NormalizationLog {
    pub removed: Vec<RemovedEdge>,
    pub unreachable: BTreeSet<String>,
    /// Depth-pruned edges whose parent is no longer an ancestor of the child.
    pub lost_ancestors: Vec<Edge>,
}

/// Break cycles by removing the back-edges found by depth-first traversal.
///
/// Traversal starts at the root and visits children in lexicographic id
/// order; remaining unvisited components are then scanned in lexicographic
/// order so the output is a DAG even off the root component. The removal
/// log preserves discovery order.
pub fn break_cycles(
    root: &str,
    raw_edges: &[Edge],
) -> Result<(Vec<Edge>, Vec<RemovedEdge>), CatGraphError> {
    let mut nodes: BTreeSet<&str> = BTreeSet::new();
    for (c, p) in raw_edges {
        nodes.insert(c);
        nodes.insert(p);
    }
    if !nodes.contains(root) {
        return Err(CatGraphError::MissingRoot(root.to_string()));
    }

    // parent -> children, children sorted for deterministic visit order
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (c, p) in raw_edges {
        children.entry(p).or_default().push(c);
    }
    for kids in children.values_mut() {
        kids.sort_unstable();
        kids.dedup();
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color: HashMap<&str, Color> = nodes.iter().map(|&n| (n, Color::White)).collect();
    let mut removed_set: HashSet<(&str, &str)> = HashSet::new();
    let mut removed = Vec::new();

    let mut starts: Vec<&str> = vec![root];
    starts.extend(nodes.iter().copied().filter(|&n| n != root));

    for start in starts {
        if color[start] != Color::White {
            continue;
        }
        // Iterative DFS: (node, next-child cursor).
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        color.insert(start, Color::Gray);
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            let cursor = top.1;
            top.1 += 1;
            let kids = children.get(node).map(|v| v.as_slice()).unwrap_or(&[]);
            if cursor < kids.len() {
                let child = kids[cursor];
                match color[child] {
                    Color::Gray => {
                        // Back-edge: child is on the current DFS stack.
                        removed_set.insert((child, node));
                        removed.push(RemovedEdge {
                            child: child.to_string(),
                            parent: node.to_string(),
                            reason: RemovalReason::CycleBackEdge,
                        });
                    }
                    Color::White => {
                        color.insert(child, Color::Gray);
                        stack.push((child, 0));
                    }
                    Color::Black => {}
                }
            } else {
                color.insert(node, Color::Black);
                stack.pop();
            }
        }
    }

    let kept = raw_edges
        .iter()
        .filter(|(c, p)| !removed_set.contains(&(c.as_str(), p.as_str())))
        .cloned()
        .collect();
    Ok((kept, removed))
}

/// Normalized category hierarchy with levels (`root` at 0, deeper is larger)
/// and precomputed transitive ancestor sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryGraph {
    pub root_id: String,
    /// id -> display name (defaults to the id).
    pub categories: BTreeMap<String, String>,
    /// child -> retained parents; all retained parents share the maximal
    /// level among the child's pre-normalization parents.
    pub parent_edges: BTreeMap<String, BTreeSet<String>>,
    pub article_assoc: BTreeMap<String, BTreeSet<String>>,
    pub levels: BTreeMap<String, u32>,
    /// Categories not reachable from the root; excluded from queries.
    pub unreachable: BTreeSet<String>,
    #[serde(skip)]
    ancestors: HashMap<String, BTreeSet<String>>,
}

impl CategoryGraph {
    /// Normalize a cycle-free edge set into a depth-consistent hierarchy.
    ///
    /// Levels are assigned frontier by frontier from the root: a category is
    /// placed once all its reachable parents are placed, at one more than
    /// their maximum level, and its edges to shallower parents are removed.
    pub fn enforce_depth_consistency(
        root: &str,
        dag_edges: &[Edge],
        categories: impl IntoIterator<Item = (String, String)>,
        article_assoc: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<(CategoryGraph, NormalizationLog), CatGraphError> {
        let mut names: BTreeMap<String, String> = categories.into_iter().collect();
        let mut all_nodes: BTreeSet<String> = names.keys().cloned().collect();
        for (c, p) in dag_edges {
            all_nodes.insert(c.clone());
            all_nodes.insert(p.clone());
        }
        all_nodes.insert(root.to_string());
        for n in &all_nodes {
            names.entry(n.clone()).or_insert_with(|| n.clone());
        }

        let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut children: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (c, p) in dag_edges {
            parents.entry(c).or_default().insert(p);
            children.entry(p).or_default().insert(c);
        }

        // Reachable set: descendants of root.
        let mut reachable: BTreeSet<&str> = BTreeSet::new();
        let mut frontier = vec![root];
        reachable.insert(root);
        while let Some(n) = frontier.pop() {
            if let Some(kids) = children.get(n) {
                for &k in kids {
                    if reachable.insert(k) {
                        frontier.push(k);
                    }
                }
            }
        }

        // Frontier sweep from the root: a node is ready when every reachable
        // parent has a level. Level = 1 + max reachable-parent level.
        let mut levels: BTreeMap<String, u32> = BTreeMap::new();
        levels.insert(root.to_string(), 0);
        let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
        for &n in &reachable {
            if n == root {
                continue;
            }
            let deg = parents
                .get(n)
                .map(|ps| ps.iter().filter(|p| reachable.contains(*p)).count())
                .unwrap_or(0);
            pending.insert(n, deg);
        }
        let mut frontier: Vec<&str> = vec![root];
        let mut log = NormalizationLog::default();
        let mut kept_edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

        while !frontier.is_empty() {
            frontier.sort_unstable();
            let mut next: Vec<&str> = Vec::new();
            for &n in &frontier {
                if let Some(kids) = children.get(n) {
                    for &k in kids {
                        if let Some(cnt) = pending.get_mut(k) {
                            *cnt -= 1;
                            if *cnt == 0 {
                                // All reachable parents placed: fix level,
                                // retain only maximal-level parents.
                                let ps = parents.get(k).expect("node has parents");
                                let max_level = ps
                                    .iter()
                                    .filter_map(|p| levels.get(*p).copied())
                                    .max()
                                    .expect("at least one leveled parent");
                                for &p in ps {
                                    match levels.get(p) {
                                        Some(&lv) if lv == max_level => {
                                            kept_edges
                                                .entry(k.to_string())
                                                .or_default()
                                                .insert(p.to_string());
                                        }
                                        Some(&lv) => log.removed.push(RemovedEdge {
                                            child: k.to_string(),
                                            parent: p.to_string(),
                                            reason: RemovalReason::ParentBelowMaxLevel {
                                                parent_level: lv,
                                                max_level,
                                            },
                                        }),
                                        None => log.removed.push(RemovedEdge {
                                            child: k.to_string(),
                                            parent: p.to_string(),
                                            reason: RemovalReason::ParentUnreachable,
                                        }),
                                    }
                                }
                                levels.insert(k.to_string(), max_level + 1);
                                next.push(k);
                            }
                        }
                    }
                }
            }
            frontier = next;
        }

        let unreachable: BTreeSet<String> = all_nodes
            .iter()
            .filter(|n| !levels.contains_key(*n))
            .cloned()
            .collect();
        for (c, p) in dag_edges {
            if !levels.contains_key(c) {
                log.removed.push(RemovedEdge {
                    child: c.clone(),
                    parent: p.clone(),
                    reason: RemovalReason::ChildUnreachable,
                });
            }
        }
        log.unreachable = unreachable.clone();

        let mut graph = CategoryGraph {
            root_id: root.to_string(),
            categories: names,
            parent_edges: kept_edges,
            article_assoc,
            levels,
            unreachable,
            ancestors: HashMap::new(),
        };
        graph.rebuild_ancestors();

        // The repair claim is that a pruned parent stays reachable through
        // intermediates. Not guaranteed; check and report.
        for e in &log.removed {
            if matches!(e.reason, RemovalReason::ParentBelowMaxLevel { .. })
                && !graph
                    .category_ancestors(&e.child)
                    .map(|anc| anc.contains(&e.parent))
                    .unwrap_or(false)
            {
                log.lost_ancestors.push((e.child.clone(), e.parent.clone()));
            }
        }
        Ok((graph, log))
    }

    /// Full pipeline: cycle breaking followed by depth-consistency.
    pub fn normalize(
        root: &str,
        raw_edges: &[Edge],
        article_assoc: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<(CategoryGraph, NormalizationLog), CatGraphError> {
        let (dag, cycle_removed) = break_cycles(root, raw_edges)?;
        let (graph, mut log) =
            Self::enforce_depth_consistency(root, &dag, std::iter::empty(), article_assoc)?;
        let mut removed = cycle_removed;
        removed.append(&mut log.removed);
        log.removed = removed;
        Ok((graph, log))
    }

    fn rebuild_ancestors(&mut self) {
        // Topological by level: parents always have strictly smaller levels.
        let mut order: Vec<&String> = self.levels.keys().collect();
        order.sort_by_key(|id| (self.levels[*id], (*id).clone()));
        let mut anc: HashMap<String, BTreeSet<String>> = HashMap::new();
        for id in order {
            let mut set = BTreeSet::new();
            if let Some(parents) = self.parent_edges.get(id) {
                for p in parents {
                    set.insert(p.clone());
                    if let Some(pa) = anc.get(p) {
                        set.extend(pa.iter().cloned());
                    }
                }
            }
            anc.insert(id.clone(), set);
        }
        self.ancestors = anc;
    }

    pub fn level(&self, category: &str) -> Option<u32> {
        self.levels.get(category).copied()
    }

    pub fn max_level(&self) -> u32 {
        self.levels.values().copied().max().unwrap_or(0)
    }

    /// Strict ancestors of a category (retained parents, transitively).
    pub fn category_ancestors(&self, category: &str) -> Option<&BTreeSet<String>> {
        self.ancestors.get(category)
    }

    /// Direct categories of an article that survived normalization.
    pub fn article_categories(&self, article_id: &str) -> BTreeSet<String> {
        self.article_assoc
            .get(article_id)
            .map(|cats| {
                cats.iter()
                    .filter(|c| self.levels.contains_key(*c))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Ancestor closure of an article: direct categories plus all their
    /// transitive parents. Falls back to `{root}` when every direct
    /// category was pruned, keeping downstream features total.
    pub fn article_ancestors(&self, article_id: &str) -> BTreeSet<String> {
        let cats = self.article_categories(article_id);
        if cats.is_empty() {
            return std::iter::once(self.root_id.clone()).collect();
        }
        let mut out = BTreeSet::new();
        for c in &cats {
            out.insert(c.clone());
            if let Some(anc) = self.ancestors.get(c) {
                out.extend(anc.iter().cloned());
            }
        }
        out
    }

    /// All common ancestors of maximal level for the given articles
    /// (ties returned as a set). Articles without any category association
    /// are skipped; with nothing left, or no common ancestor deeper than the
    /// root, the result is `{root}`.
    pub fn lca_categories<I, S>(&self, article_ids: I) -> BTreeSet<String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut common: Option<BTreeSet<String>> = None;
        for id in article_ids {
            let id = id.as_ref();
            if self
                .article_assoc
                .get(id)
                .map(|c| c.is_empty())
                .unwrap_or(true)
            {
                continue; // no associations: skipped
            }
            let anc = self.article_ancestors(id);
            common = Some(match common {
                None => anc,
                Some(prev) => prev.intersection(&anc).cloned().collect(),
            });
        }
        let root_only: BTreeSet<String> = std::iter::once(self.root_id.clone()).collect();
        let common = match common {
            None => return root_only,
            Some(c) if c.is_empty() => return root_only,
            Some(c) => c,
        };
        let best = common
            .iter()
            .filter_map(|c| self.levels.get(c))
            .copied()
            .max();
        match best {
            None => root_only,
            Some(max) => common
                .into_iter()
                .filter(|c| self.levels.get(c) == Some(&max))
                .collect(),
        }
    }

    /// Direct categories of an article plus their one-step parents.
    pub fn parents_of(&self, article_id: &str) -> Result<BTreeSet<String>, CatGraphError> {
        if !self.article_assoc.contains_key(article_id) {
            return Err(CatGraphError::UnknownArticle(article_id.to_string()));
        }
        let mut out = BTreeSet::new();
        for c in self.article_categories(article_id) {
            if let Some(ps) = self.parent_edges.get(&c) {
                out.extend(ps.iter().cloned());
            }
            out.insert(c);
        }
        if out.is_empty() {
            out.insert(self.root_id.clone());
        }
        Ok(out)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), CatGraphError> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<CategoryGraph, CatGraphError> {
        let file = File::open(path)?;
        let graph: CategoryGraph = serde_json::from_reader(BufReader::new(file))?;
        Ok(graph.with_rebuilt_ancestors())
    }

    /// Restore the ancestor cache after deserialization (it is not part of
    /// the wire form).
    pub fn with_rebuilt_ancestors(mut self) -> CategoryGraph {
        self.rebuild_ancestors();
        self
    }
}

/// `child<TAB>parent` per line.
pub fn load_edges_tsv(path: &Path) -> Result<Vec<Edge>, CatGraphError> {
    read_two_column_tsv(path)
}

/// `article_id<TAB>category_id` per line.
pub fn load_assoc_tsv(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>, CatGraphError> {
    let rows = read_two_column_tsv(path)?;
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (article, cat) in rows {
        out.entry(article).or_default().insert(cat);
    }
    Ok(out)
}

fn read_two_column_tsv(path: &Path) -> Result<Vec<(String, String)>, CatGraphError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()));
            }
            _ => {
                return Err(CatGraphError::MalformedTsv {
                    line: lineno + 1,
                    reason: "expected two tab-separated fields".into(),
                })
            }
        }
    }
    Ok(out)
}
