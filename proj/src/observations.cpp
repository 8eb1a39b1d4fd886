#include "aqbias/observations.hpp"

#include <cmath>
#include <cstring>

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

// NaN-aware bitwise equality: two missing values compare equal.
bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) && std::isnan(b[i])) continue;
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

const char* to_string(DeviceKind kind) {
  return kind == DeviceKind::station ? "station" : "sensor";
}

DeviceKind parse_device_kind(const std::string& text) {
  if (text == "station") return DeviceKind::station;
  if (text == "sensor") return DeviceKind::sensor;
  throw ConfigError("unknown device kind '" + text + "'");
}

std::vector<std::string> rouen_channels() { return {"NO", "CO", "Ox", "RH", "T"}; }

bool DeviceSeries::operator==(const DeviceSeries& o) const {
  return id == o.id && kind == o.kind && x == o.x && y == o.y &&
         cell == o.cell && same_values(xs, o.xs) && same_values(z, o.z) &&
         same_values(m, o.m) && same_values(channels, o.channels) &&
         mask == o.mask;
}

void ObservationSet::refresh_masks() {
  const std::size_t nq = q();
  for (auto& d : devices) {
    d.mask.assign(hours.size(), 0);
    for (std::size_t t = 0; t < hours.size(); ++t) {
      bool ok = std::isfinite(d.z[t]) && std::isfinite(d.m[t]);
      if (d.kind == DeviceKind::sensor)
        for (std::size_t c = 0; c < nq && ok; ++c)
          ok = std::isfinite(d.channels[t * nq + c]);
      d.mask[t] = ok ? 1 : 0;
    }
  }
}

ObservationSet ObservationSet::subset_hours(
    const std::vector<std::size_t>& keep) const {
  ObservationSet out;
  out.layout = layout;
  out.channel_names = channel_names;
  const std::size_t l = layout.l();
  const std::size_t nq = q();
  for (std::size_t t : keep) {
    out.hours.push_back(hours.at(t));
    out.xt.insert(out.xt.end(), xt.begin() + static_cast<std::ptrdiff_t>(t * l),
                  xt.begin() + static_cast<std::ptrdiff_t>((t + 1) * l));
  }
  for (const auto& d : devices) {
    DeviceSeries s;
    s.id = d.id;
    s.kind = d.kind;
    s.x = d.x;
    s.y = d.y;
    s.cell = d.cell;
    s.xs = d.xs;
    for (std::size_t t : keep) {
      s.z.push_back(d.z[t]);
      s.m.push_back(d.m[t]);
      s.mask.push_back(d.mask[t]);
      if (d.kind == DeviceKind::sensor)
        s.channels.insert(
            s.channels.end(),
            d.channels.begin() + static_cast<std::ptrdiff_t>(t * nq),
            d.channels.begin() + static_cast<std::ptrdiff_t>((t + 1) * nq));
    }
    out.devices.push_back(std::move(s));
  }
  return out;
}

bool ObservationSet::operator==(const ObservationSet& o) const {
  return layout == o.layout && channel_names == o.channel_names &&
         hours == o.hours && same_values(xt, o.xt) && devices == o.devices;
}

}  // namespace aqbias
