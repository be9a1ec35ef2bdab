#![no_main]

use corrnet::classify::TrainedModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = TrainedModel::from_json(data) else {
        return;
    };
    let json = serde_json::to_vec(&model).unwrap();
    assert_eq!(TrainedModel::from_json(&json[..]).unwrap(), model);
    let row = vec![0.0; model.features().len()];
    let _ = model.predict(model.features(), &row);
});
