use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("NoJsonFound: completion contains no JSON object or array")]
pub struct NoJsonFound;

/// Pulls the first JSON document out of a model completion.
///
/// A completion that is itself a JSON value is returned as-is. Otherwise the
/// first balanced object or array that parses is returned, which strips code
/// fences and any prose around them.
pub fn extract_json(text: &str) -> Result<serde_json::Value, NoJsonFound> {
    if let Ok(v) = serde_json::from_str(text.trim()) {
        return Ok(v);
    }
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(offset) = bytes[start..].iter().position(|b| *b == b'{' || *b == b'[') {
        let open = start + offset;
        if let Some(close) = balanced_end(bytes, open) {
            if let Ok(v) = serde_json::from_str(&text[open..=close]) {
                return Ok(v);
            }
        }
        start = open + 1;
    }
    Err(NoJsonFound)
}

/// Index of the bracket closing the one at `open`, honoring JSON strings.
fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn strips_prose() {
        assert_eq!(
            extract_json("Here you go: {\"topic\":\"temps\"}").unwrap(),
            json!({"topic": "temps"})
        );
    }

    #[test]
    fn strips_code_fences() {
        assert_eq!(extract_json("```json\n[1,2]\n```").unwrap(), json!([1, 2]));
    }

    #[test]
    fn refusal_has_no_json() {
        assert_eq!(extract_json("I cannot help"), Err(NoJsonFound));
    }

    #[test]
    fn skips_bracketed_prose_before_document() {
        assert_eq!(
            extract_json("[note] see {\"a\": \"}\"} and more").unwrap(),
            json!({"a": "}"})
        );
    }

    #[test]
    fn truncated_object_is_not_json() {
        assert_eq!(extract_json("{\"topic\": \"x\", \"keyPoints\": [\"a\""), Err(NoJsonFound));
    }

    fn arb_json() -> impl Strategy<Value = serde_json::Value> {
        let leaf = prop_oneof![
            Just(serde_json::Value::Null),
            any::<bool>().prop_map(serde_json::Value::from),
            any::<i64>().prop_map(serde_json::Value::from),
            (-1.0e6f64..1.0e6).prop_map(serde_json::Value::from),
            ".{0,12}".prop_map(serde_json::Value::from),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::from),
                prop::collection::btree_map("[a-z{}\\[\\]\"]{0,6}", inner, 0..4)
                    .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn serialized_values_round_trip(v in arb_json()) {
            let text = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(extract_json(&text).unwrap(), v.clone());
            let pretty = serde_json::to_string_pretty(&v).unwrap();
            prop_assert_eq!(extract_json(&pretty).unwrap(), v);
        }
    }
}
