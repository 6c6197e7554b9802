mod common;

use common::{commit, full_load, Gen, Session};
use plebeia::cursor::go_up_to_root;
use plebeia::model::{canonical_bud, modelize_node};
use plebeia::node::find_violation;
use plebeia::storage::resolve_all;
use plebeia::{merkle_hash, Blake2b28, StorageModel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_tree_survives_storage(seed in any::<u64>()) {
        let mut g = Gen::new(seed);
        let m = g.store(24, 2);
        let t = canonical_bud(&m);
        prop_assert_eq!(find_violation(&t), None);
        prop_assert_eq!(&modelize_node(&t).unwrap(), &m);

        let mut s = StorageModel::new();
        let i = commit(&mut s, &t);
        let back = full_load(&s, i);
        prop_assert_eq!(&modelize_node(&back).unwrap(), &m);
        prop_assert_eq!(
            merkle_hash(&Blake2b28, &back).unwrap(),
            merkle_hash(&Blake2b28, &t).unwrap()
        );
    }

    #[test]
    fn random_sessions_keep_root_valid(seed in any::<u64>(), n in 0usize..120) {
        let mut g = Gen::new(seed);
        let s = Session::random(&mut g, n);
        let root = go_up_to_root(s.z.zipper());
        let root = resolve_all(s.handle(), &root).unwrap();
        prop_assert_eq!(find_violation(&root), None);
    }
}
