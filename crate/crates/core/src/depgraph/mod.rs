//! Dependency parses → undirected token graphs → the normalised adjacency
//! operator `D̃^{-1/2} (A + I) D̃^{-1/2}` used by the graph convolution.

mod adjacency;
mod cache;
mod conllu;

use std::collections::BTreeSet;

pub use adjacency::{batch_graphs, normalize, NormalizedAdjacency};
pub use cache::{read_cache, write_cache};
pub use conllu::{index_by_sent_id, parse_conllu, read_conllu, read_conllu_keyed, ConlluSentence};

use crate::{Error, Result};

/// One parsed sentence. `heads[i]` is the 0-based head of token `i`, `None`
/// for the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyParse {
    tokens: Vec<String>,
    heads: Vec<Option<usize>>,
    relations: Vec<String>,
}

impl DependencyParse {
    /// Validates lengths, a single root and acyclicity.
    pub fn new(
        tokens: Vec<String>,
        heads: Vec<Option<usize>>,
        relations: Vec<String>,
    ) -> std::result::Result<Self, String> {
        let n = tokens.len();
        if heads.len() != n || relations.len() != n {
            return Err(format!(
                "ragged parse: {n} tokens, {} heads, {} relations",
                heads.len(),
                relations.len()
            ));
        }
        if n == 0 {
            return Err("empty sentence".into());
        }
        let roots = heads.iter().filter(|h| h.is_none()).count();
        if roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        for (i, h) in heads.iter().enumerate() {
            match *h {
                Some(h) if h >= n => return Err(format!("token {i} has out-of-range head {h}")),
                Some(h) if h == i => return Err(format!("token {i} is its own head")),
                _ => {}
            }
        }
        // every token must reach the root within n steps
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = heads[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(format!("head cycle through token {start}"));
                }
            }
        }
        Ok(Self {
            tokens,
            heads,
            relations,
        })
    }

    /// A left-to-right chain: token i depends on i + 1, the last token is
    /// the root.
    pub fn chain(tokens: Vec<String>) -> Result<Self> {
        let n = tokens.len();
        let heads = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
        let rels = vec!["dep".to_string(); n];
        Self::new(tokens, heads, rels).map_err(Error::InvalidArgument)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn heads(&self) -> &[Option<usize>] {
        &self.heads
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }
}

/// Undirected graph over token positions. Self-connections are not stored;
/// they come from the `+ I` in [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl TweetGraph {
    /// Builds from explicit pairs; each is stored as `(min, max)`.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) outside {n} nodes"
                )));
            }
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Keeps nodes `0..max_len`, dropping edges that touch removed nodes.
    pub fn truncate(&self, max_len: usize) -> TweetGraph {
        if self.n <= max_len {
            return self.clone();
        }
        TweetGraph {
            n: max_len,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(_, b)| b < max_len)
                .collect(),
        }
    }
}

/// One undirected edge per head–dependent pair.
pub fn build_graph(parse: &DependencyParse) -> TweetGraph {
    let edges = parse
        .heads
        .iter()
        .enumerate()
        .filter_map(|(d, h)| h.map(|h| (h.min(d), h.max(d))))
        .collect();
    TweetGraph {
        n: parse.len(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(heads: &[Option<usize>]) -> DependencyParse {
        let n = heads.len();
        DependencyParse::new(
            (0..n).map(|i| format!("w{i}")).collect(),
            heads.to_vec(),
            vec!["dep".into(); n],
        )
        .unwrap()
    }

    #[test]
    fn graph_examples() {
        let g = build_graph(&parse(&[Some(1), None]));
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
        let g = build_graph(&parse(&[Some(1), Some(2), None]));
        assert_eq!(
            g.edges().iter().copied().collect::<Vec<_>>(),
            vec![(0, 1), (1, 2)]
        );
        let g = build_graph(&parse(&[None]));
        assert_eq!(g.n(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn invalid_trees_rejected() {
        let t = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let r = |n: usize| vec![String::new(); n];
        assert!(DependencyParse::new(t(2), vec![None, None], r(2)).is_err());
        assert!(DependencyParse::new(t(3), vec![Some(1), Some(0), None], r(3)).is_err());
        assert!(DependencyParse::new(t(2), vec![Some(5), None], r(2)).is_err());
        assert!(DependencyParse::new(t(2), vec![None], r(2)).is_err());
    }

    #[test]
    fn truncation_drops_dangling_edges() {
        let g = build_graph(&parse(&[Some(3), Some(0), Some(1), None]));
        let t = g.truncate(2);
        assert_eq!(t.n(), 2);
        assert_eq!(t.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(g.truncate(10), g);
    }
}
