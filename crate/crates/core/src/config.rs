//! Line-oriented tokenizer shared by the robot, skeleton and map files.
//!
//! One record per line, `#` starts a comment, tokens are separated by
//! whitespace. Every record is `<keyword> <positional>* <key>=<value>*`.

use std::collections::HashMap;

use crate::geometry::{UnitQuaternion, Vec3};
use crate::model::ConfigError;

pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub column: usize,
}

pub(crate) struct Record<'a> {
    pub line: usize,
    pub keyword: Token<'a>,
    pub positional: Vec<Token<'a>>,
    options: HashMap<&'a str, Token<'a>>,
    /// Column just past the end of the line, for "missing key" errors.
    end_column: usize,
}

pub(crate) fn records(text: &str) -> Result<Vec<Record<'_>>, ConfigError> {
    let mut out = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        let mut tokens = tokenize(content).into_iter();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        let mut positional = Vec::new();
        let mut options = HashMap::new();
        for token in tokens {
            match token.text.split_once('=') {
                Some((key, value)) => {
                    if key.is_empty() {
                        return Err(ConfigError::parse(line, token.column, "empty key before `=`"));
                    }
                    let value_token = Token {
                        text: value,
                        column: token.column + key.len() + 1,
                    };
                    if options.insert(key, value_token).is_some() {
                        return Err(ConfigError::parse(
                            line,
                            token.column,
                            format!("duplicate key `{key}`"),
                        ));
                    }
                }
                None if options.is_empty() => positional.push(token),
                None => {
                    return Err(ConfigError::parse(
                        line,
                        token.column,
                        format!("unexpected token `{}` after key=value pairs", token.text),
                    ))
                }
            }
        }
        out.push(Record {
            line,
            keyword,
            positional,
            options,
            end_column: content.chars().count() + 1,
        });
    }
    Ok(out)
}

fn tokenize(content: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (column, (byte, ch)) in content.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token {
                    text: &content[b..byte],
                    column: c + 1,
                });
            }
        } else if start.is_none() {
            start = Some((byte, column));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token {
            text: &content[b..],
            column: c + 1,
        });
    }
    tokens
}

impl<'a> Record<'a> {
    pub fn error(&self, column: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::parse(self.line, column, message)
    }

    pub fn expect_positional(&self, count: usize) -> Result<(), ConfigError> {
        if self.positional.len() != count {
            let column = self
                .positional
                .get(count)
                .map_or(self.end_column, |t| t.column);
            return Err(self.error(
                column,
                format!(
                    "`{}` takes {count} positional argument(s), found {}",
                    self.keyword.text,
                    self.positional.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn expect_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (key, token) in &self.options {
            if !allowed.contains(key) {
                return Err(self.error(
                    token.column - key.len() - 1,
                    format!("unknown key `{key}` for `{}`", self.keyword.text),
                ));
            }
        }
        Ok(())
    }

    pub fn optional(&self, key: &str) -> Option<&Token<'a>> {
        self.options.get(key)
    }

    pub fn required(&self, key: &str) -> Result<&Token<'a>, ConfigError> {
        self.options.get(key).ok_or_else(|| {
            self.error(
                self.end_column,
                format!("missing `{key}=` for `{}`", self.keyword.text),
            )
        })
    }

    pub fn real(&self, key: &str) -> Result<f64, ConfigError> {
        let token = self.required(key)?;
        parse_real(token).map_err(|m| self.error(token.column, m))
    }

    pub fn reals<const N: usize>(&self, key: &str) -> Result<[f64; N], ConfigError> {
        let token = self.required(key)?;
        self.reals_in(token, token.text, 0)
    }

    pub fn reals_in<const N: usize>(
        &self,
        token: &Token<'_>,
        text: &str,
        offset: usize,
    ) -> Result<[f64; N], ConfigError> {
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != N {
            return Err(self.error(
                token.column + offset,
                format!("expected {N} comma-separated values, found {}", parts.len()),
            ));
        }
        let mut out = [0.0; N];
        let mut column = token.column + offset;
        for (slot, part) in out.iter_mut().zip(parts) {
            *slot = parse_real(&Token { text: part, column }).map_err(|m| self.error(column, m))?;
            column += part.len() + 1;
        }
        Ok(out)
    }

    pub fn vec3(&self, key: &str) -> Result<Vec3, ConfigError> {
        let [x, y, z] = self.reals::<3>(key)?;
        Ok(Vec3::new(x, y, z))
    }

    pub fn unit_axis(&self, key: &str) -> Result<Vec3, ConfigError> {
        let token = self.required(key)?;
        self.vec3(key)?
            .normalized()
            .map_err(|e| self.error(token.column, format!("`{key}`: {e}")))
    }

    /// `tx,ty,tz;qw,qx,qy,qz`
    pub fn origin(&self, key: &str) -> Result<(Vec3, UnitQuaternion), ConfigError> {
        let token = self.required(key)?;
        let Some((t, q)) = token.text.split_once(';') else {
            return Err(self.error(token.column, format!("`{key}` must be `tx,ty,tz;qw,qx,qy,qz`")));
        };
        let [tx, ty, tz] = self.reals_in::<3>(token, t, 0)?;
        let [qw, qx, qy, qz] = self.reals_in::<4>(token, q, t.len() + 1)?;
        let rotation = UnitQuaternion::new(qw, qx, qy, qz)
            .map_err(|e| self.error(token.column + t.len() + 1, format!("`{key}`: {e}")))?;
        Ok((Vec3::new(tx, ty, tz), rotation))
    }

    pub fn sign(&self, token: &Token<'_>, text: &str, offset: usize) -> Result<f64, ConfigError> {
        match text {
            "+1" | "1" => Ok(1.0),
            "-1" => Ok(-1.0),
            other => Err(self.error(
                token.column + offset,
                format!("sign must be +1 or -1, found `{other}`"),
            )),
        }
    }
}

fn parse_real(token: &Token<'_>) -> Result<f64, String> {
    let text = token.text;
    // Rust's float parser also accepts `inf`/`nan`; configs only take finite decimals.
    let looks_decimal = !text.is_empty()
        && text
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match text.parse::<f64>() {
        Ok(v) if looks_decimal && v.is_finite() => Ok(v),
        _ => Err(format!("expected a decimal number, found `{text}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_with_columns_and_comments() {
        let recs = records("  joint  a x=1   # trailing\n\n# only comment\nsphere b").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].line, 1);
        assert_eq!(recs[0].keyword.column, 3);
        assert_eq!(recs[0].positional[0].text, "a");
        assert_eq!(recs[0].positional[0].column, 10);
        assert_eq!(recs[0].optional("x").unwrap().column, 14);
        assert_eq!(recs[1].line, 4);
    }

    #[test]
    fn rejects_bad_reals() {
        let recs = records("j v=1.5e-3 w=nan u=inf z=1,2").unwrap();
        assert_eq!(recs[0].real("v").unwrap(), 1.5e-3);
        assert!(recs[0].real("w").is_err());
        assert!(recs[0].real("u").is_err());
        let err = recs[0].reals::<3>("z").unwrap_err();
        assert!(err.to_string().contains("expected 3"));
    }

    #[test]
    fn duplicate_key_is_error() {
        assert!(records("j a=1 a=2").is_err());
    }
}
