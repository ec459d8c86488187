#include "drugcomb/server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"

namespace drugcomb {

void configure_routes(httplib::Server& server, const FittedModel& model, const std::filesystem::path& static_dir) {
  const std::string meta = meta_json(model).dump();
  const std::string regimens = regimens_json(model.dict).dump();
  server.Get("/api/meta", [meta](const httplib::Request&, httplib::Response& res) {
    res.set_content(meta, "application/json");
  });
  server.Get("/api/regimens", [regimens](const httplib::Request&, httplib::Response& res) {
    res.set_content(regimens, "application/json");
  });
  server.Post("/api/predict", [&model](const httplib::Request& req, httplib::Response& res) {
    const auto reply = predict_http(model, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) server.set_mount_point("/", static_dir.string());
}

void serve(const FittedModel& model, const std::string& host, int port, const std::filesystem::path& static_dir) {
  httplib::Server server;
  configure_routes(server, model, static_dir);
  if (!server.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace drugcomb
