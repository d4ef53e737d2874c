//! Loading a relation dataset from JSON lines and a word-vector text file,
//! clustering relations into tasks and building the stream.

use std::fs;

use lifelong::bench::{build_stream, cluster_split, load_relation_dataset, SPLIT_SEED};

fn main() -> lifelong::Result<()> {
    let dir = std::env::temp_dir().join("lifelong-ingest");
    fs::create_dir_all(&dir)?;
    let emb = dir.join("vectors.txt");
    fs::write(
        &emb,
        "born 1 0 0\nbirth 0.9 0.1 0\nplace 0.8 0 0.2\nin 0.1 0.1 0\nof 0 0.1 0.1\nwhere 0.2 0 0.1\nfounded 0 1 0\nby 0.1 0.8 0\nwho 0 0.1 0.2\nit 0 0.2 0\ncapital 0 0 1\ncity 0.1 0 0.9\n",
    )?;
    let names = ["place_of_birth", "founded_by", "capital_city", "born_in"];
    let sentences = [
        ["where", "born", "in"],
        ["who", "founded", "it"],
        ["capital", "city", "of"],
        ["born", "where", "in"],
    ];
    let mut lines = String::new();
    for i in 0..40 {
        let r = i % 4;
        let s = sentences[r];
        lines.push_str(&format!(
            "{{\"tokens\": [\"{}\", \"{}\", \"{}\"], \"relation\": {r}, \"candidates\": [0, 1, 2, 3], \"relation_name\": \"{}\"}}\n",
            s[0], s[1], s[2], names[r]
        ));
    }
    let samples = dir.join("samples.jsonl");
    fs::write(&samples, lines)?;

    let data = load_relation_dataset(&samples, &emb)?;
    for r in 0..data.relations.len() as u32 {
        println!("relation {r} {:<15} tokens {:?}", data.relations.name(r), data.relations.tokens(r));
    }
    let split = cluster_split(&data.relations, 2, SPLIT_SEED)?;
    println!("task of each relation: {split:?}");
    let stream = build_stream(&data.samples, &split, 0)?;
    for (k, t) in stream.tasks().iter().enumerate() {
        println!("task {k}: relations {:?}, {} train / {} test", t.labels, t.train.len(), t.test.len());
    }
    Ok(())
}
