//==============================================================================
// Copyright (c) 2026 The Dara Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================
// Command-line front end. Talks to the engine only through dara.h.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dara/dara.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int report(dara_status status) {
  if (status == DARA_OK) return kExitOk;
  std::fprintf(stderr, "dara: %s error: %s\n", dara_status_name(status), dara_last_error());
  return status == DARA_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

// `key=value`, `--key value` and `--key=value`, in command-line order.
bool collect_overrides(const std::vector<std::string>& args,
                       std::vector<std::pair<std::string, std::string>>& out) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    std::string key;
    std::string value;
    if (arg.rfind("--", 0) == 0 && arg.size() > 2) {
      key = arg.substr(2);
      if (const auto eq = key.find('='); eq != std::string::npos) {
        value = key.substr(eq + 1);
        key.resize(eq);
      } else if (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0 &&
                 args[i + 1].find('=') == std::string::npos) {
        value = args[++i];
      } else {
        value = "true";  // bare boolean flag, e.g. --shared_finetune
      }
      for (char& ch : key) {
        if (ch == '-') ch = '_';
      }
    } else if (const auto eq = arg.find('='); eq != std::string::npos && eq > 0) {
      key = arg.substr(0, eq);
      value = arg.substr(eq + 1);
    } else {
      std::fprintf(stderr, "dara: config error: expected key=value, got '%s'\n", arg.c_str());
      return false;
    }
    out.emplace_back(key, value);
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain few-shot classification engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string inspect_path;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Generate source and target feature banks"},
      {"pretrain", "Train the backbone on the source bank"},
      {"finetune", "Meta-finetune once on the target bank and store Z and the gate"},
      {"eval", "Evaluate few-shot episodes and write the report"},
      {"hist", "Write query distances before and after alignment"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->allow_extras();  // key=value and --key overrides
    subs[name] = sub;
  }
  CLI::App* inspect = app.add_subcommand("inspect", "Print the header of a bank or checkpoint");
  inspect->add_option("path", inspect_path, "file to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (inspect->parsed()) {
    char* text = nullptr;
    const dara_status s = dara_inspect(inspect_path.c_str(), &text);
    if (s != DARA_OK) return report(s);
    std::fputs(text, stdout);
    dara_string_free(text);
    return kExitOk;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  std::vector<std::pair<std::string, std::string>> overrides;
  if (!collect_overrides(subs[command]->remaining(), overrides)) return kExitConfig;

  dara_config* config = nullptr;
  dara_status s = dara_config_load(config_path.c_str(), &config);
  if (s != DARA_OK) return report(s);
  for (const auto& [key, value] : overrides) {
    s = dara_config_set(config, key.c_str(), value.c_str());
    if (s != DARA_OK) {
      dara_config_free(config);
      return report(s);
    }
  }

  if (command == "synth") {
    s = dara_synth(config);
  } else if (command == "pretrain") {
    s = dara_pretrain(config);
  } else if (command == "finetune") {
    s = dara_finetune(config);
  } else if (command == "eval") {
    double mean = 0.0;
    double ci95 = 0.0;
    s = dara_evaluate(config, &mean, &ci95);
    if (s == DARA_OK) std::printf("accuracy %.4f +- %.4f\n", mean, ci95);
  } else if (command == "hist") {
    s = dara_histogram(config);
  }
  dara_config_free(config);
  return report(s);
}
