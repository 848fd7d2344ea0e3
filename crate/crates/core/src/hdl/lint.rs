//! Structural checks over an emitted file tree. Not a Verilog parser: it
//! relies on the emitter's layout conventions (one port per line, instance
//! names prefixed `u_`, headers closed by a lone `);`).

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

static MODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*module\s+([A-Za-z_]\w*)").unwrap());
static ENDMODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*endmodule\b").unwrap());
static PORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:input|output|inout)\b[^,;]*?([A-Za-z_]\w*)\s*,?\s*$").unwrap());
static INSTANCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*([A-Za-z_]\w*)\s*(?:#\s*\(.*\))?\s*(u_\w+)\s*\(").unwrap());
static READMEMH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"\$readmemh\s*\(\s*"([^"]+)""#).unwrap());

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LintIssue {
    pub file: String,
    pub message: String,
}

struct ModuleText<'a> {
    name: String,
    header: Vec<&'a str>,
    body: Vec<&'a str>,
}

fn split_modules<'a>(file: &str, text: &'a str, issues: &mut Vec<LintIssue>) -> Vec<ModuleText<'a>> {
    let mut modules = Vec::new();
    let mut current: Option<(ModuleText<'a>, bool)> = None;
    for line in text.lines() {
        if let Some(cap) = MODULE.captures(line) {
            if current.is_some() {
                issues.push(LintIssue {
                    file: file.into(),
                    message: format!("module {} opened before previous endmodule", &cap[1]),
                });
            }
            current = Some((
                ModuleText {
                    name: cap[1].to_string(),
                    header: vec![line],
                    body: Vec::new(),
                },
                true,
            ));
        } else if ENDMODULE.is_match(line) {
            match current.take() {
                Some((m, _)) => modules.push(m),
                None => issues.push(LintIssue {
                    file: file.into(),
                    message: "endmodule without module".into(),
                }),
            }
        } else if let Some((m, in_header)) = current.as_mut() {
            if *in_header {
                m.header.push(line);
                if line.trim() == ");" {
                    *in_header = false;
                }
            } else {
                m.body.push(line);
            }
        }
    }
    if let Some((m, _)) = current {
        issues.push(LintIssue {
            file: file.into(),
            message: format!("module {} has no endmodule", m.name),
        });
    }
    modules
}

fn mentions(lines: &[&str], name: &str) -> bool {
    lines.iter().any(|l| {
        l.match_indices(name).any(|(i, _)| {
            let before = l[..i].chars().next_back();
            let after = l[i + name.len()..].chars().next();
            let ident = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
            !ident(before) && !ident(after)
        })
    })
}

/// Check every `(path, text)` in `files`. Returns all problems found.
pub fn lint_tree(files: &[(String, String)]) -> Vec<LintIssue> {
    let mut issues = Vec::new();
    let paths: BTreeSet<&str> = files.iter().map(|(p, _)| p.as_str()).collect();
    let mut defined = BTreeSet::new();
    let mut instantiated = Vec::new();
    for (path, text) in files.iter().filter(|(p, _)| p.ends_with(".v")) {
        let modules = split_modules(path, text, &mut issues);
        if modules.is_empty() {
            issues.push(LintIssue {
                file: path.clone(),
                message: "no module defined".into(),
            });
        }
        for m in modules {
            if !defined.insert(m.name.clone()) {
                issues.push(LintIssue {
                    file: path.clone(),
                    message: format!("module {} defined twice", m.name),
                });
            }
            for line in &m.header {
                if let Some(cap) = PORT.captures(line) {
                    if !mentions(&m.body, &cap[1]) {
                        issues.push(LintIssue {
                            file: path.clone(),
                            message: format!("port {} of {} is never referenced", &cap[1], m.name),
                        });
                    }
                }
            }
            for line in &m.body {
                if let Some(cap) = INSTANCE.captures(line) {
                    instantiated.push((path.clone(), cap[1].to_string()));
                }
                for cap in READMEMH.captures_iter(line) {
                    if !paths.contains(&cap[1]) {
                        issues.push(LintIssue {
                            file: path.clone(),
                            message: format!("$readmemh path {} is not in the tree", &cap[1]),
                        });
                    }
                }
            }
        }
    }
    for (file, module) in instantiated {
        if !defined.contains(&module) {
            issues.push(LintIssue {
                file,
                message: format!("instantiated module {module} is not emitted"),
            });
        }
    }
    issues
}
