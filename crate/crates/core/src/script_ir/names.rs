use super::IrError;

/// Folds a surface form ("MRS. O'BRIEN", "  Céline ") into a stable slug
/// ("mrs-obrien", "celine").
///
/// Whitespace, hyphens and underscores separate words; every other
/// punctuation character is dropped without separating. The result is a
/// fixed point: normalizing a slug returns it unchanged.
pub fn normalize_name(surface: &str) -> Result<String, IrError> {
    let ascii = deunicode::deunicode(surface);
    let mut slug = String::with_capacity(ascii.len());
    let mut pending_sep = false;
    for c in ascii.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !slug.is_empty() {
                slug.push('-');
            }
            pending_sep = false;
            slug.push(c.to_ascii_lowercase());
        } else if c.is_whitespace() || c == '-' || c == '_' {
            pending_sep = true;
        }
    }
    if slug.is_empty() {
        return Err(IrError::EmptyAfterNormalization(surface.to_string()));
    }
    Ok(slug)
}
