use std::process::Command;

use plebeia::cursor::zipper_of_root;
use plebeia::cli::parse_key;
use plebeia::{merkle_hash, ops, Blake2b28, Node, StorageHandle};

fn plebeia() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plebeia"))
}

fn stdout(c: &mut Command) -> String {
    let o = c.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap().trim().to_string()
}

#[test]
fn cli_root_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.plb");
    stdout(plebeia().arg("init").arg(&f));

    let binds = [("RL", "01"), ("LLLR", "ff00"), ("0x3a", ""), ("RR", "abcdef")];
    let mut z = zipper_of_root(Node::empty_bud()).unwrap();
    for (k, v) in binds {
        stdout(
            plebeia()
                .env("PLEBEIA_STORAGE", &f)
                .args(["insert", "--key", k, "--value-hex", v]),
        );
        let v = hex::decode(v).unwrap();
        z = ops::insert(&z, &parse_key(k).unwrap(), v, StorageHandle::detached())
            .unwrap()
            .unwrap();
    }
    let expect = merkle_hash(&Blake2b28, z.focus()).unwrap();
    let got = stdout(plebeia().arg("--storage").arg(&f).arg("root"));
    assert_eq!(got, expect.to_string());
}

#[test]
fn value_file_and_long_values() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.plb");
    let v: Vec<u8> = (0..=255u8).cycle().take(700).collect();
    let vf = dir.path().join("v.bin");
    std::fs::write(&vf, &v).unwrap();
    stdout(plebeia().arg("init").arg(&f));
    stdout(plebeia().arg("--storage").arg(&f).args(["insert", "--key", "LRL", "--value-file"]).arg(&vf));
    let got = stdout(plebeia().arg("--storage").arg(&f).args(["get", "--key", "LRL"]));
    assert_eq!(got, hex::encode(&v));
    let check = stdout(plebeia().arg("--storage").arg(&f).arg("check"));
    assert!(check.starts_with("ok: "), "{check}");
}

#[test]
fn missing_storage_is_usage_error() {
    let o = plebeia().env_remove("PLEBEIA_STORAGE").arg("root").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = plebeia()
        .arg("--storage")
        .arg(dir.path().join("absent.plb"))
        .arg("root")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
