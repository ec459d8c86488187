#pragma once

#include <filesystem>
#include <string>

#include "drugcomb/predict.hpp"

namespace httplib {
class Server;
}

namespace drugcomb {

// GET /api/meta, GET /api/regimens, POST /api/predict, and static files from
// `static_dir` when it exists. The model must outlive the server.
void configure_routes(httplib::Server& server, const FittedModel& model,
                      const std::filesystem::path& static_dir = {});

// Blocks until the server stops. Throws IoError when the address cannot be bound.
void serve(const FittedModel& model, const std::string& host, int port,
           const std::filesystem::path& static_dir = {});

}  // namespace drugcomb
