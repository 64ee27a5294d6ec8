use crate::continuous::ActorCritic;
use crate::discrete::QAgent;
use crate::error::{Error, Result};
use crate::ndnet::NetworkParams;

use super::config::{Algorithm, EnvKind};

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedAgent {
    Discrete(QAgent),
    Continuous(ActorCritic),
}

/// A saved agent plus the environment it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub algo: Algorithm,
    pub rows: usize,
    pub cols: usize,
    pub sections: usize,
    pub agent: TrainedAgent,
}

const HEADER: &str = "udrl-checkpoint 1";

fn field<'a, I: Iterator<Item = (usize, &'a str)>>(lines: &mut I, key: &str) -> Result<(usize, Vec<String>)> {
    let (ln, line) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("checkpoint truncated before `{key}`") })?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Parse { line: ln, msg: format!("expected `{key}`, got `{line}`") });
    }
    Ok((ln, parts.map(str::to_string).collect()))
}

fn parse<T: std::str::FromStr>(ln: usize, v: &[String]) -> Result<T> {
    v.first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse { line: ln, msg: "bad numeric field".into() })
}

impl Checkpoint {
    pub fn env(&self) -> EnvKind {
        self.algo.env()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nalgo {}\n", self.algo);
        let nets: Vec<(&str, &NetworkParams)> = match &self.agent {
            TrainedAgent::Discrete(a) => {
                out += &format!(
                    "maze {} {}\nupdates {}\nfresh_samples {}\nepsilon {}\n",
                    self.rows, self.cols, a.update_counter, a.fresh_sample_counter, a.epsilon
                );
                vec![("current", &a.current), ("target", &a.target)]
            }
            TrainedAgent::Continuous(a) => {
                out += &format!(
                    "arm {}\nupdates {}\nfresh_samples {}\nnoise_variance {}\naction_bound {}\n",
                    self.sections, a.update_counter, a.fresh_sample_counter, a.noise_variance, a.action_bound
                );
                vec![
                    ("actor", &a.actor),
                    ("critic", &a.critic),
                    ("target_actor", &a.target_actor),
                    ("target_critic", &a.target_critic),
                ]
            }
        };
        for (name, net) in nets {
            out += &format!("net {name}\n");
            out += &net.to_snapshot();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (ln, ver) = field(&mut lines, "udrl-checkpoint")?;
        if ver != ["1"] {
            return Err(Error::Parse { line: ln, msg: "unsupported checkpoint version".into() });
        }
        let (_, algo) = field(&mut lines, "algo")?;
        let algo: Algorithm = algo.first().map(String::as_str).unwrap_or("").parse()?;
        let (rows, cols, sections) = match algo.env() {
            EnvKind::Maze => {
                let (ln, dims) = field(&mut lines, "maze")?;
                (parse(ln, &dims)?, parse(ln, &dims[1.min(dims.len())..])?, 0)
            }
            EnvKind::Arm => {
                let (ln, k) = field(&mut lines, "arm")?;
                (0, 0, parse(ln, &k)?)
            }
        };
        let (ln, v) = field(&mut lines, "updates")?;
        let updates: u64 = parse(ln, &v)?;
        let (ln, v) = field(&mut lines, "fresh_samples")?;
        let fresh: u64 = parse(ln, &v)?;
        let agent = match algo.env() {
            EnvKind::Maze => {
                let (ln, v) = field(&mut lines, "epsilon")?;
                let epsilon: f64 = parse(ln, &v)?;
                field(&mut lines, "net")?;
                let current = NetworkParams::read_snapshot(&mut lines)?;
                field(&mut lines, "net")?;
                let target = NetworkParams::read_snapshot(&mut lines)?;
                TrainedAgent::Discrete(QAgent { current, target, epsilon, update_counter: updates, fresh_sample_counter: fresh })
            }
            EnvKind::Arm => {
                let (ln, v) = field(&mut lines, "noise_variance")?;
                let noise_variance: f64 = parse(ln, &v)?;
                let (ln, v) = field(&mut lines, "action_bound")?;
                let action_bound: f64 = parse(ln, &v)?;
                let mut nets = Vec::with_capacity(4);
                for _ in 0..4 {
                    field(&mut lines, "net")?;
                    nets.push(NetworkParams::read_snapshot(&mut lines)?);
                }
                let target_critic = nets.pop().expect("four nets");
                let target_actor = nets.pop().expect("four nets");
                let mut a = ActorCritic::from_networks(nets.remove(0), nets.remove(0), action_bound, noise_variance)?;
                a.target_actor = target_actor;
                a.target_critic = target_critic;
                a.update_counter = updates;
                a.fresh_sample_counter = fresh;
                TrainedAgent::Continuous(a)
            }
        };
        Ok(Self { algo, rows, cols, sections, agent })
    }
}
