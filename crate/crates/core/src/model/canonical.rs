/// Canonical form of a name: full Unicode case folding, trimmed, with internal
/// whitespace runs collapsed to a single space.
pub fn canonicalize(raw: &str) -> String {
    let folded = caseless::default_case_fold_str(raw);
    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
