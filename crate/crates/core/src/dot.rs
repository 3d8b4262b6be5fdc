//! Minimal Graphviz DOT emission shared by the tree exporters.

pub(crate) struct DotBuilder {
    lines: Vec<String>,
    next_id: usize,
}

impl DotBuilder {
    pub fn new(graph_name: &str) -> Self {
        DotBuilder {
            lines: vec![
                format!("digraph {} {{", graph_name),
                "  node [shape=box, style=rounded, fontname=\"Helvetica\"];".to_string(),
            ],
            next_id: 0,
        }
    }

    pub fn node(&mut self, label: &str, filled: bool) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        let style = if filled {
            ", style=\"rounded,filled\", fillcolor=\"#e8f0fe\""
        } else {
            ""
        };
        self.lines
            .push(format!("  n{} [label=\"{}\"{}];", id, escape(label), style));
        id
    }

    pub fn edge(&mut self, from: usize, to: usize, label: &str) {
        self.lines.push(format!(
            "  n{} -> n{} [label=\"{}\"];",
            from,
            to,
            escape(label)
        ));
    }

    pub fn finish(mut self) -> String {
        self.lines.push("}".to_string());
        self.lines.join("\n") + "\n"
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}
