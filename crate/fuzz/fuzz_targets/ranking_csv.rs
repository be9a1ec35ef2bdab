#![no_main]

use corrnet::ranking::{PairQueue, RankedList, RankingMethod};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, body)) = data.split_first() else {
        return;
    };
    if selector % 2 == 0 {
        let method = RankingMethod::ALL[(selector as usize / 2) % RankingMethod::ALL.len()];
        if let Ok(list) = RankedList::read_csv(method, body) {
            let mut out = Vec::new();
            list.write_csv(&mut out).unwrap();
            assert_eq!(RankedList::read_csv(method, &out[..]).unwrap().entries, list.entries);
        }
    } else if let Ok(q) = PairQueue::read_csv(body) {
        let mut out = Vec::new();
        q.write_csv(&mut out).unwrap();
        assert_eq!(PairQueue::read_csv(&out[..]).unwrap(), q);
    }
});
