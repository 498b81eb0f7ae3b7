//! Synthetic source trees on disk.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes `content` to `root/rel`, creating parent directories.
pub fn write_file(root: &Path, rel: &str, content: &str) -> io::Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyntheticStats {
    pub files: u64,
    pub physical_lines: u64,
}

const C_LINES: &[&str] = &[
    "    int n = compute(a, b);",
    "    if (n > limit) {",
    "        return -1;",
    "    }",
    "    // adjust the offset",
    "    buffer[n] = 0;",
    "    memcpy(dst, src, len);",
    "    strcpy(name, input);",
    "    char *p = malloc(size);",
    "    free(p);",
    "    /* TODO: bounds */",
    "",
    "    total += n * 2;",
    "    printf(\"%d\\n\", total);",
];
const CS_LINES: &[&str] = &[
    "        var user = repo.Find(id);",
    "        if (user == null) { return; }",
    "        string password = \"hunter2\";",
    "        // FIXME remove before release",
    "        log.Info(\"loaded\");",
    "        var total = items.Count + 1;",
    "",
    "        lock (this) { counter++; }",
    "        doc.LoadXml(input);",
];
const JAVA_LINES: &[&str] = &[
    "        int count = list.size();",
    "        // iterate",
    "        for (int i = 0; i < count; i++) { sum += list.get(i); }",
    "        String label = \"value\";",
    "",
];
const SQL_LINES: &[&str] = &[
    "SELECT id, name FROM users WHERE id = @id;",
    "-- report query",
    "UPDATE accounts SET balance = balance - 1 WHERE id = 7;",
    "EXEC(@sql);",
    "",
];

fn body(rng: &mut ChaCha8Rng, lines: &[&str], n: usize) -> String {
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(lines.choose(rng).unwrap());
        s.push('\n');
    }
    s
}

/// Writes a mixed-language tree of about `target_lines` physical lines.
/// The same seed always produces the same tree.
pub fn synthetic_corpus(root: &Path, seed: u64, target_lines: u64) -> io::Result<SyntheticStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SyntheticStats::default();
    let dirs = ["core", "net", "ui", "db", "third_party/zlib", "tools"];
    while stats.physical_lines < target_lines {
        let dir = dirs[stats.files as usize % dirs.len()];
        let n = rng.gen_range(40..400);
        let (ext, text) = match rng.gen_range(0..10) {
            0..=3 => ("c", format!("#include <string.h>\n\nint f{}(char *dst, const char *src, int len) {{\n{}}}\n", stats.files, body(&mut rng, C_LINES, n))),
            4..=5 => ("cpp", format!("namespace app {{\nvoid run{}() {{\n{}}}\n}}\n", stats.files, body(&mut rng, C_LINES, n))),
            6..=7 => ("cs", format!("class C{} {{\n    void M() {{\n{}    }}\n}}\n", stats.files, body(&mut rng, CS_LINES, n))),
            8 => ("java", format!("class J{} {{\n    void m() {{\n{}    }}\n}}\n", stats.files, body(&mut rng, JAVA_LINES, n))),
            _ => ("sql", body(&mut rng, SQL_LINES, n)),
        };
        let rel = format!("{dir}/file{:05}.{ext}", stats.files);
        stats.physical_lines += text.lines().count() as u64;
        stats.files += 1;
        write_file(root, &rel, &text)?;
    }
    Ok(stats)
}
