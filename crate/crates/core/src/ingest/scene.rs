//! High-level summary of an MRML-style scene: one entry per top-level node.

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneNode {
    #[serde(rename = "type")]
    pub node_type: String,
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub nodes: Vec<SceneNode>,
    pub count: usize,
}

impl SceneSummary {
    pub fn new(nodes: Vec<SceneNode>) -> Self {
        SceneSummary {
            count: nodes.len(),
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Compact JSON with a fixed key order (`nodes`, `count`; `type`, `id`, `name`).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scene summary serializes")
    }
}

/// Lists the direct children of the root element as `(tag, id, name)`
/// triples in document order. Missing attributes become empty strings.
pub fn extract_scene_summary(xml_text: &str) -> Result<SceneSummary, IngestError> {
    if xml_text.trim().is_empty() {
        return Err(IngestError::Scene("empty document".into()));
    }
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| IngestError::Scene(e.to_string()))?;
    let nodes = doc
        .root_element()
        .children()
        .filter(|n| n.is_element())
        .map(|n| SceneNode {
            node_type: n.tag_name().name().to_string(),
            id: n.attribute("id").unwrap_or_default().to_string(),
            name: n.attribute("name").unwrap_or_default().to_string(),
        })
        .collect();
    Ok(SceneSummary::new(nodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_root() {
        let s = extract_scene_summary("<MRML></MRML>").unwrap();
        assert_eq!(s, SceneSummary::default());
        assert_eq!(s.to_canonical_json(), r#"{"nodes":[],"count":0}"#);
    }

    #[test]
    fn two_nodes_in_order() {
        let xml =
            r#"<MRML><Volume id="vtkMRMLScalarVolumeNode1" name="CT_chest"/><Model id="m1" name="skull"/></MRML>"#;
        let s = extract_scene_summary(xml).unwrap();
        assert_eq!(s.count, 2);
        let triples: Vec<_> = s
            .nodes
            .iter()
            .map(|n| (n.node_type.as_str(), n.id.as_str(), n.name.as_str()))
            .collect();
        assert_eq!(
            triples,
            [
                ("Volume", "vtkMRMLScalarVolumeNode1", "CT_chest"),
                ("Model", "m1", "skull")
            ]
        );
        assert_eq!(
            s.to_canonical_json(),
            r#"{"nodes":[{"type":"Volume","id":"vtkMRMLScalarVolumeNode1","name":"CT_chest"},{"type":"Model","id":"m1","name":"skull"}],"count":2}"#
        );
    }

    #[test]
    fn attributes_default_and_grandchildren_ignored() {
        let xml = "<MRML>text<Selection><Inner id=\"x\" name=\"y\"/></Selection><!-- c --></MRML>";
        let s = extract_scene_summary(xml).unwrap();
        assert_eq!(
            s.nodes,
            vec![SceneNode {
                node_type: "Selection".into(),
                id: String::new(),
                name: String::new()
            }]
        );
    }

    #[test]
    fn malformed_or_empty_rejected() {
        assert!(extract_scene_summary("").is_err());
        assert!(extract_scene_summary("<MRML><Volume></MRML>").is_err());
        assert!(extract_scene_summary("not xml").is_err());
    }
}
