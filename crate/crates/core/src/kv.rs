//! The line-oriented `key = value` text format shared by configs and
//! dataset manifests. `#` starts a comment; `[name]` opens a section.

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Entry {
    /// Empty for keys before the first section header.
    pub section: String,
    pub key: String,
    pub value: String,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct SyntaxError {
    pub line: usize,
    pub text: String,
}

pub(crate) fn parse(text: &str) -> Result<Vec<Entry>, SyntaxError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| SyntaxError {
                line,
                text: raw.to_string(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| SyntaxError {
            line,
            text: raw.to_string(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(SyntaxError {
                line,
                text: raw.to_string(),
            });
        }
        out.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_lines() {
        let e = parse("a = 1\n# note\n\n[dsn]\nsteps = 20 # trailing\nname = x y\n").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!((e[0].section.as_str(), e[0].key.as_str(), e[0].line), ("", "a", 1));
        assert_eq!((e[1].section.as_str(), e[1].value.as_str(), e[1].line), ("dsn", "20", 5));
        assert_eq!(e[2].value, "x y");
    }

    #[test]
    fn malformed_lines() {
        assert_eq!(parse("ok = 1\nnope\n").unwrap_err().line, 2);
        assert_eq!(parse("[open\n").unwrap_err().line, 1);
        assert_eq!(parse(" = 3\n").unwrap_err().line, 1);
    }
}
