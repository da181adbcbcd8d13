// qguitar: offline render, live session and measurement-log statistics.
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "qguitar/audio_io.hpp"
#include "qguitar/commands.hpp"
#include "qguitar/config.hpp"
#include "qguitar/live.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

using namespace qguitar;

int cmd_render(const session::RenderRequest& request) {
    try {
        const auto summary = session::run_render(request);
        session::print_render_summary(std::cout, summary);
        return session::kExitOk;
    } catch (const session::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitUsageError;
    } catch (const midi::SmfError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitRuntimeError;
    }
}

int cmd_live(const std::string& config_path, std::optional<double> duration) {
    session::SessionConfig config;
    try {
        config = session::load_session_config(config_path);
    } catch (const session::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitUsageError;
    }
    try {
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::signal(SIGPIPE, SIG_IGN);
        auto sink = session::make_audio_sink(config.live.audio_output, config.render.sample_rate, config.channels);
        session::LiveSession live(config, std::move(sink));
        live.start();
        std::cerr << "live: telemetry on 127.0.0.1:" << live.telemetry_port() << " at " << config.telemetry.rate_hz
                  << " Hz\n";
        const int status = live.run(g_stop, duration);
        const auto stats = live.stats();
        std::cerr << "live: " << stats.blocks << " blocks, " << stats.late_blocks << " late, max block "
                  << stats.max_block_ms << " ms, " << stats.measurements << " measurements\n";
        return status;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitRuntimeError;
    }
}

int cmd_stats(const std::string& log_path) {
    try {
        const auto log = io::read_measurement_log(log_path);
        session::print_measurement_stats(std::cout, session::summarize_measurements(log));
        return session::kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return session::kExitRuntimeError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum guitar engine: sonify a single qubit steered by guitar MIDI and pedals"};
    app.require_subcommand(1);

    session::RenderRequest request;
    std::string pedals;
    std::string seed_text;
    double render_duration = -1.0;
    auto* render = app.add_subcommand("render", "Render an SMF (plus optional pedal track) to WAV");
    render->add_option("--midi", request.midi_path, "Guitar Standard MIDI File")->required();
    render->add_option("--pedals", pedals, "Pedal automation Standard MIDI File");
    render->add_option("--config", request.config_path, "Session config file")->required();
    render->add_option("--seed", seed_text, "Measurement seed (u64, decimal or 0x hex)");
    render->add_option("--out", request.out_path, "Output WAV path")->required();
    render->add_option("--duration", render_duration, "Seconds to render (default: last event + tail)");

    std::string live_config;
    double live_duration = -1.0;
    auto* live = app.add_subcommand("live", "Run the real-time session with telemetry");
    live->add_option("--config", live_config, "Session config file")->required();
    live->add_option("--duration", live_duration, "Stop after this many seconds");

    std::string log_path;
    auto* stats = app.add_subcommand("stats", "Summarize a measurement log");
    stats->add_option("--log", log_path, "Measurement log (line-delimited JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return session::kExitUsageError;
    }

    if (render->parsed()) {
        if (!pedals.empty()) {
            request.pedal_path = pedals;
        }
        if (!seed_text.empty()) {
            try {
                request.seed = session::parse_seed(seed_text);
            } catch (const std::invalid_argument& e) {
                std::cerr << "error: --seed: " << e.what() << '\n';
                return session::kExitUsageError;
            }
        }
        if (render_duration >= 0.0) {
            request.duration = render_duration;
        }
        return cmd_render(request);
    }
    if (live->parsed()) {
        return cmd_live(live_config, live_duration >= 0.0 ? std::optional<double>(live_duration) : std::nullopt);
    }
    return cmd_stats(log_path);
}
