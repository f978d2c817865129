use std::fmt;

/// One `status=<ok|fail> stage=<name> key=value ...` line. Values containing
/// whitespace, quotes or `=` are written as JSON strings.
#[derive(Debug, Clone)]
pub struct Summary {
    stage: &'static str,
    ok: bool,
    fields: Vec<(&'static str, String)>,
}

impl Summary {
    pub fn ok(stage: &'static str) -> Self {
        Self {
            stage,
            ok: true,
            fields: Vec::new(),
        }
    }

    pub fn fail(stage: &'static str) -> Self {
        Self {
            stage,
            ok: false,
            fields: Vec::new(),
        }
    }

    pub fn with(mut self, key: &'static str, value: impl fmt::Display) -> Self {
        self.fields.push((key, value.to_string()));
        self
    }

    pub fn set(&mut self, key: &'static str, value: impl fmt::Display) {
        self.fields.push((key, value.to_string()));
    }
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty()
        || v.chars()
            .any(|c| c.is_whitespace() || c == '"' || c == '=' || c.is_control())
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "status={} stage={}",
            if self.ok { "ok" } else { "fail" },
            self.stage
        )?;
        for (k, v) in &self.fields {
            if needs_quotes(v) {
                write!(f, " {k}={}", serde_json::Value::String(v.clone()))?;
            } else {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}
