/// Node of an HTML table tree. `colspan`, `rowspan` and `content` are only
/// meaningful on `td` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableNode {
    pub tag: String,
    pub colspan: u32,
    pub rowspan: u32,
    pub content: String,
    pub children: Vec<TableNode>,
}

impl TableNode {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            colspan: 1,
            rowspan: 1,
            content: String::new(),
            children: Vec::new(),
        }
    }

    pub fn cell(content: impl Into<String>, rowspan: u32, colspan: u32) -> Self {
        Self {
            content: content.into(),
            rowspan,
            colspan,
            ..Self::new("td")
        }
    }

    pub fn with_children(mut self, children: Vec<TableNode>) -> Self {
        self.children = children;
        self
    }

    /// Number of nodes in this subtree, itself included.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TableNode::size).sum::<usize>()
    }

    fn blank(&mut self) {
        self.content.clear();
        self.children.iter_mut().for_each(TableNode::blank);
    }
}

/// Ordered labeled tree of one HTML table, rooted at a `table` node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableTree {
    pub root: TableNode,
}

impl TableTree {
    pub fn new(root: TableNode) -> Self {
        Self { root }
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Nodes in preorder (parent before children, left to right).
    pub fn preorder(&self) -> impl Iterator<Item = &TableNode> {
        let mut stack = vec![&self.root];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    /// Copy with every cell's content removed.
    pub fn without_content(&self) -> Self {
        let mut root = self.root.clone();
        root.blank();
        Self { root }
    }
}
