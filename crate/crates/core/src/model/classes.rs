// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Reserved namespace whose classes every app may use without declaring them.
pub const GLOBAL_NAMESPACE: &str = "org.pathharbor.global";

/// Class suffixes declared in the global namespace.
pub const GLOBAL_CLASSES: &[&str] = &["roi", "tissue", "background", "artifact", "other"];

/// `[a-z][a-z0-9_]*`
pub fn is_segment(text: &str) -> bool {
    let mut bytes = text.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
}

/// Splits `<namespace>.classes.<suffix>` into namespace and suffix, checking
/// that every segment follows the class grammar.
pub fn parse_class_value(value: &str) -> Option<(&str, &str)> {
    let idx = value.find(".classes.")?;
    let (namespace, rest) = (&value[..idx], &value[idx + ".classes.".len()..]);
    if namespace.is_empty() || rest.is_empty() {
        return None;
    }
    let ns_ok = namespace.split('.').all(|s| is_segment(s) && s != "classes");
    let suffix_ok = rest.split('.').all(is_segment);
    (ns_ok && suffix_ok).then_some((namespace, rest))
}

/// Nested class declarations. Every node path is a declared class suffix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassTree(pub BTreeMap<String, ClassTree>);

impl ClassTree {
    pub fn declares(&self, suffix: &str) -> bool {
        let mut node = self;
        for segment in suffix.split('.') {
            match node.0.get(segment) {
                Some(child) => node = child,
                None => return false,
            }
        }
        !suffix.is_empty()
    }

    /// All declared suffixes in depth-first lexicographic order.
    pub fn suffixes(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn collect(&self, prefix: &str, out: &mut Vec<String>) {
        for (name, child) in &self.0 {
            let path = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
            out.push(path.clone());
            child.collect(&path, out);
        }
    }

    pub fn from_suffixes<'a>(suffixes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tree = ClassTree::default();
        for suffix in suffixes {
            let mut node = &mut tree;
            for segment in suffix.split('.') {
                node = node.0.entry(segment.to_string()).or_default();
            }
        }
        tree
    }
}
