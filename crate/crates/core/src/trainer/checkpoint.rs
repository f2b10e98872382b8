//! Checkpoint directory: `scene.json`, `trajectories.json`, `adam.bin`,
//! `config.json` (training and event configuration) and `state.json`
//! (iteration counter, sampler position and epoch order).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, Observation, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::events::EventConfig;
use crate::geometry::ExposureTrajectory;
use crate::scene::Scene;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConfigEcho {
    train: TrainConfig,
    events: EventConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainerState {
    iteration: usize,
    rng_seed: [u8; 32],
    /// `u128` word position, decimal.
    rng_word_pos: String,
    rng_stream: u64,
    order: Vec<usize>,
    cursor: usize,
}

/// Everything a checkpoint holds.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub scene: Scene,
    pub trajectories: Vec<ExposureTrajectory>,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub event_config: EventConfig,
    pub iteration: usize,
    state: TrainerState,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

impl Trainer {
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("scene.json"), &self.scene)?;
        write_json(&dir.join("trajectories.json"), &self.trajectories())?;
        write_json(
            &dir.join("config.json"),
            &ConfigEcho {
                train: self.config.clone(),
                events: self.event_config,
            },
        )?;
        write_json(
            &dir.join("state.json"),
            &TrainerState {
                iteration: self.iteration,
                rng_seed: self.rng.get_seed(),
                rng_word_pos: self.rng.get_word_pos().to_string(),
                rng_stream: self.rng.get_stream(),
                order: self.order.clone(),
                cursor: self.cursor,
            },
        )?;
        let adam_path = dir.join("adam.bin");
        let file = File::create(&adam_path).map_err(|e| Error::io(&adam_path, e))?;
        let mut w = BufWriter::new(file);
        self.adam.write_to(&mut w).map_err(|e| Error::io(&adam_path, e))?;
        w.flush().map_err(|e| Error::io(&adam_path, e))
    }

    /// Continues training from `dir`. `observations` supply images, events and
    /// EDI targets; their trajectories are replaced by the checkpoint's.
    pub fn resume(dir: &Path, mut observations: Vec<Observation>) -> Result<Self> {
        let ck = load_checkpoint(dir)?;
        if ck.trajectories.len() != observations.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} trajectories for {} observations",
                ck.trajectories.len(),
                observations.len()
            )));
        }
        for (o, t) in observations.iter_mut().zip(&ck.trajectories) {
            o.trajectory = *t;
        }
        let mut trainer = Trainer::new(ck.scene, observations, ck.config, ck.event_config)?;
        if ck.adam.poses.len() != trainer.observations.len() || ck.adam.position.len() != 3 * trainer.scene.len() {
            return Err(Error::format(dir.join("adam.bin"), "optimizer state does not match the scene"));
        }
        trainer.adam = ck.adam;
        trainer.iteration = ck.iteration;
        let word_pos: u128 = ck
            .state
            .rng_word_pos
            .parse()
            .map_err(|_| Error::format(dir.join("state.json"), "bad rng_word_pos"))?;
        let mut rng = ChaCha8Rng::from_seed(ck.state.rng_seed);
        rng.set_stream(ck.state.rng_stream);
        rng.set_word_pos(word_pos);
        trainer.rng = rng;
        trainer.order = ck.state.order;
        trainer.cursor = ck.state.cursor;
        Ok(trainer)
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let scene: Scene = read_json(&dir.join("scene.json"))?;
    scene.validate()?;
    let trajectories: Vec<ExposureTrajectory> = read_json(&dir.join("trajectories.json"))?;
    let echo: ConfigEcho = read_json(&dir.join("config.json"))?;
    let state: TrainerState = read_json(&dir.join("state.json"))?;
    let adam_path = dir.join("adam.bin");
    let file = File::open(&adam_path).map_err(|e| Error::io(&adam_path, e))?;
    let adam = AdamState::read_from(&mut BufReader::new(file))
        .map_err(|e| Error::format(&adam_path, e.to_string()))?;
    Ok(Checkpoint {
        scene,
        trajectories,
        adam,
        config: echo.train,
        event_config: echo.events,
        iteration: state.iteration,
        state,
    })
}
