use std::collections::{BTreeSet, HashMap, VecDeque};

use lachesis_core::{EventId, NodeId, OperaChain};

use crate::OracleError;

/// Plain adjacency copy of a chain, indexed by insertion position.
#[derive(Debug, Clone)]
pub struct Dag {
    pub ids: Vec<EventId>,
    pub creators: Vec<NodeId>,
    pub self_parent: Vec<Option<usize>>,
    pub parents: Vec<Vec<usize>>,
    pub children: Vec<Vec<usize>>,
    index: HashMap<EventId, usize>,
}

impl Dag {
    pub fn from_chain(chain: &OperaChain) -> Self {
        let mut dag = Dag {
            ids: Vec::new(),
            creators: Vec::new(),
            self_parent: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
            index: HashMap::new(),
        };
        for ev in chain.iter() {
            let i = dag.ids.len();
            let lookup = |id: EventId| dag.index[&id];
            let sp = ev.self_parent().map(lookup);
            let parents: Vec<usize> = ev.parents().map(lookup).collect();
            for &p in &parents {
                dag.children[p].push(i);
            }
            dag.index.insert(ev.id(), i);
            dag.ids.push(ev.id());
            dag.creators.push(ev.creator());
            dag.self_parent.push(sp);
            dag.parents.push(parents);
            dag.children.push(Vec::new());
        }
        dag
    }

    /// A bare graph from parent lists, for hand-drawn examples. Every vertex
    /// gets creator 0, its first parent as self-parent and a synthetic id.
    pub fn from_parents(parents: &[Vec<usize>]) -> Dag {
        let mut dag = Dag {
            ids: Vec::new(),
            creators: Vec::new(),
            self_parent: Vec::new(),
            parents: Vec::new(),
            children: vec![Vec::new(); parents.len()],
            index: HashMap::new(),
        };
        for (i, ps) in parents.iter().enumerate() {
            assert!(ps.iter().all(|&p| p < i), "parents must precede their children");
            let id = EventId::hash_of(&(i as u64).to_be_bytes());
            for &p in ps {
                dag.children[p].push(i);
            }
            dag.index.insert(id, i);
            dag.ids.push(id);
            dag.creators.push(NodeId(0));
            dag.self_parent.push(ps.first().copied());
            dag.parents.push(ps.clone());
        }
        dag
    }

    /// The induced subgraph on `keep`, which must be closed under ancestry.
    pub fn induced(&self, keep: &BTreeSet<usize>) -> Dag {
        let mut sub = Dag {
            ids: Vec::new(),
            creators: Vec::new(),
            self_parent: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
            index: HashMap::new(),
        };
        let mut renumber = HashMap::new();
        for &v in keep {
            let i = sub.ids.len();
            renumber.insert(v, i);
            let parents: Vec<usize> = self.parents[v].iter().map(|p| renumber[p]).collect();
            for &p in &parents {
                sub.children[p].push(i);
            }
            sub.index.insert(self.ids[v], i);
            sub.ids.push(self.ids[v]);
            sub.creators.push(self.creators[v]);
            sub.self_parent.push(self.self_parent[v].map(|p| renumber[&p]));
            sub.parents.push(parents);
            sub.children.push(Vec::new());
        }
        sub
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &EventId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Strict ancestors of `v` by breadth-first search over parent edges.
    pub fn ancestors(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = self.parents[v].iter().copied().collect();
        while let Some(x) = queue.pop_front() {
            if seen.insert(x) {
                queue.extend(self.parents[x].iter().copied());
            }
        }
        seen
    }

    /// Whether `x` lies on `y`'s self-parent chain (or is `y`).
    pub fn self_ancestor_or_equal(&self, x: usize, y: usize) -> bool {
        let mut cur = Some(y);
        while let Some(c) = cur {
            if c == x {
                return true;
            }
            cur = self.self_parent[c];
        }
        false
    }

    /// Whether `creator`'s events in `set` split into more than one branch.
    /// `set` must be closed under ancestry.
    pub fn has_fork_in(&self, creator: NodeId, set: &BTreeSet<usize>) -> bool {
        let mine: Vec<usize> = set.iter().copied().filter(|&x| self.creators[x] == creator).collect();
        let extended: BTreeSet<usize> = mine.iter().filter_map(|&x| self.self_parent[x]).collect();
        mine.iter().filter(|x| !extended.contains(x)).count() > 1
    }
}

pub fn bfs_ancestors(chain: &OperaChain, v: &EventId) -> Result<BTreeSet<EventId>, OracleError> {
    let dag = Dag::from_chain(chain);
    let i = dag.index_of(v).ok_or(OracleError::UnknownEvent(*v))?;
    Ok(dag.ancestors(i).into_iter().map(|a| dag.ids[a]).collect())
}
