use std::path::{Path, PathBuf};
use std::process::Command;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub struct Case {
    pub name: String,
    pub args: Vec<String>,
}

pub fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(root().join("golden/cases.txt")).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, args) = l.split_once('|').expect("name | args");
            Case {
                name: name.trim().to_string(),
                args: args.split_whitespace().map(String::from).collect(),
            }
        })
        .collect()
}

/// Runs `nsl` from the fixture directory and renders exit code, stdout,
/// stderr and any files it wrote.
pub fn render(args: &[String]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    let args: Vec<String> = args
        .iter()
        .map(|a| match a.strip_prefix("out:") {
            Some(f) => {
                outputs.push(f.to_string());
                dir.path().join(f).display().to_string()
            }
            None => a.clone(),
        })
        .collect();
    let out = Command::new(env!("CARGO_BIN_EXE_nsl"))
        .args(&args)
        .current_dir(root().join("fixtures"))
        .env_remove("NSL_LOG")
        .output()
        .unwrap();
    let mut s = format!("exit: {}\n", out.status.code().unwrap());
    s += &String::from_utf8(out.stdout).unwrap();
    let err = String::from_utf8(out.stderr).unwrap();
    if !err.is_empty() {
        s += "--- stderr\n";
        s += &err;
    }
    for f in outputs {
        s += &format!("--- {f}\n");
        s += &std::fs::read_to_string(dir.path().join(&f)).unwrap();
    }
    s
}

/// Compares a case against its golden file; `Err` carries a description.
pub fn check(case: &Case) -> Result<(), String> {
    let got = render(&case.args);
    if render(&case.args) != got {
        return Err(format!("{}: output differs between runs", case.name));
    }
    let path = root().join("golden").join(format!("{}.out", case.name));
    if std::env::var_os("NSL_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    match std::fs::read_to_string(&path) {
        Ok(want) if want == got => Ok(()),
        Ok(_) => Err(format!("{}: differs from {}", case.name, path.display())),
        Err(_) => Err(format!("{}: missing {}", case.name, path.display())),
    }
}
