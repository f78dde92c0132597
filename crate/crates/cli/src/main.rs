mod analysis;
mod bench;
mod serve;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hri_bridge::codec::Codec;

#[derive(Parser)]
#[command(name = "hri-bridge", version, about = "Pub/sub bridge, state relay, session recorder and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pub/sub broker until killed.
    Serve {
        #[arg(long, default_value = "127.0.0.1:9090")]
        bind: String,
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
        /// Subscriber queue bound when SUBSCRIBE carries none.
        #[arg(long, default_value_t = 1)]
        queue_length: usize,
    },
    /// Run the room relay until killed.
    Relay {
        #[arg(long, default_value = "127.0.0.1:5055")]
        bind: String,
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
    },
    /// Measure RGB-D frame throughput through a local broker.
    BenchThroughput {
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
        #[arg(long, default_value_t = 640)]
        width: i32,
        #[arg(long, default_value_t = 480)]
        height: i32,
        /// Run length including the one-second warm-up.
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
    },
    /// Measure avatar-state latency through a local relay.
    BenchLatency {
        /// Client counts, driver included.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        clients: Vec<usize>,
        #[arg(long, default_value_t = 60.0)]
        rate: f64,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
        /// Per-sample latencies as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Record a relay room or a broker topic into a session file.
    Record {
        #[arg(long)]
        out: PathBuf,
        /// Relay address; requires --room.
        #[arg(long, requires = "room", conflicts_with = "broker")]
        relay: Option<String>,
        #[arg(long)]
        room: Option<String>,
        /// Broker address; requires --topic.
        #[arg(long, requires = "topic")]
        broker: Option<String>,
        #[arg(long)]
        topic: Option<String>,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
        /// Session id stored in the header; defaults to the file stem.
        #[arg(long)]
        session_id: Option<String>,
    },
    /// Replay a session with its recorded timing.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        /// Playback speed; `inf` streams without waiting.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Relay address that receives the avatar states; requires --room.
        #[arg(long, requires = "room")]
        to: Option<String>,
        #[arg(long)]
        room: Option<String>,
        #[arg(long, default_value = "binary", value_parser = parse_codec)]
        codec: Codec,
        /// Print every event as a JSON line.
        #[arg(long)]
        print: bool,
    },
    /// Extract features from sessions into a CSV table.
    Metrics {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "required_time_s,utterance_count,gaze_angle_rad,trajectory_length_m"
        )]
        features: Vec<String>,
        /// Destination CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 300.0)]
        timeout_s: f64,
        #[arg(long)]
        head_joint: Option<usize>,
        /// Speaker counted by utterance_count.
        #[arg(long)]
        robot: Option<String>,
        /// Entity measured by the gaze and trajectory features.
        #[arg(long)]
        subject: Option<String>,
    },
    /// Fit a linear model of scores on features.
    Fit {
        /// CSV with a session_id column and one column per feature.
        #[arg(long)]
        features: PathBuf,
        /// CSV with session_id and score columns.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature columns to use; all of them when absent.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
    },
}

fn parse_codec(s: &str) -> Result<Codec, String> {
    s.parse::<Codec>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve {
            bind,
            codec,
            queue_length,
        } => serve::broker(bind, codec, queue_length),
        Command::Relay { bind, codec } => serve::relay(bind, codec),
        Command::BenchThroughput {
            codec,
            width,
            height,
            seconds,
        } => bench::throughput(codec, width, height, seconds),
        Command::BenchLatency {
            clients,
            rate,
            seconds,
            codec,
            csv,
        } => bench::latency(clients, rate, seconds, codec, csv),
        Command::Record {
            out,
            relay,
            room,
            broker,
            topic,
            seconds,
            codec,
            session_id,
        } => {
            let source = match (relay, room, broker, topic) {
                (Some(addr), Some(room), None, _) => session::Source::Relay { addr, room },
                (None, _, Some(addr), Some(topic)) => session::Source::Broker { addr, topic },
                _ => anyhow::bail!("record needs --relay ADDR --room ROOM or --broker ADDR --topic TOPIC"),
            };
            session::record(&out, source, seconds, codec, session_id)
        }
        Command::Replay {
            input,
            speed,
            to,
            room,
            codec,
            print,
        } => {
            let target = to.zip(room);
            session::replay(&input, speed, target, codec, print)
        }
        Command::Metrics {
            inputs,
            features,
            out,
            timeout_s,
            head_joint,
            robot,
            subject,
        } => {
            let mut config = hri_bridge::metrics::MetricsConfig {
                timeout_s,
                robot,
                subject,
                ..Default::default()
            };
            if let Some(j) = head_joint {
                config.head_joint = j;
            }
            analysis::metrics(&inputs, &features, out.as_deref(), config)
        }
        Command::Fit {
            features,
            scores,
            out,
            columns,
        } => analysis::fit(&features, &scores, &out, columns),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HRI_BRIDGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
