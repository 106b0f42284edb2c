use std::collections::BTreeMap;

/// Disjoint-set forest over corpus positions. The root of every set is its
/// smallest position, so the root is always the earliest document.
#[derive(Debug, Clone)]
pub struct DuplicateClusters {
    parent: Vec<usize>,
    ids: Vec<String>,
}

impl DuplicateClusters {
    pub fn new(ids: Vec<String>) -> Self {
        DuplicateClusters {
            parent: (0..ids.len()).collect(),
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Root lookup without path compression.
    pub fn root(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }

    pub fn is_representative(&self, x: usize) -> bool {
        self.parent[x] == x
    }

    pub fn representative_id(&self, x: usize) -> &str {
        &self.ids[self.root(x)]
    }

    /// Removed id -> representative id, in corpus order of the removed id.
    pub fn removed_map(&self) -> BTreeMap<usize, (String, String)> {
        (0..self.len())
            .filter(|&x| !self.is_representative(x))
            .map(|x| (x, (self.ids[x].clone(), self.representative_id(x).to_string())))
            .collect()
    }

    /// Clusters with at least two members, each listed in corpus order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.len() {
            groups.entry(self.root(x)).or_default().push(x);
        }
        groups.into_values().filter(|g| g.len() > 1).collect()
    }

    pub fn id(&self, x: usize) -> &str {
        &self.ids[x]
    }
}
