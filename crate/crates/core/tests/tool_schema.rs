use dxstream_core::policy::remote_tool_schema;
use serde_json::Value;

#[test]
fn schema_matches_golden_listing() {
    let golden: Value = serde_json::from_str(include_str!("golden/tool_schema.json")).unwrap();
    // serde_json maps are ordered by key, so equality is canonical
    assert_eq!(remote_tool_schema(), golden);
}
