#pragma once

#include <json.hpp>

#include "reskit/kinetic.hpp"
#include "reskit/nonlin.hpp"
#include "reskit/powersweep.hpp"
#include "reskit/respipe.hpp"
#include "reskit/xrd.hpp"

namespace reskit::app {

using nlohmann::json;

json to_json(const numcore::Estimate& e);
json to_json(const numcore::Interval& i);
json to_json(const respipe::FullFitResult& fit);
json to_json(const respipe::PipelineDiagnostics& d);
json to_json(const powersweep::TraceFitRecord& r);
json to_json(const powersweep::TLSFit& t);
json to_json(const powersweep::PowerLawFit& p);
json to_json(const powersweep::LossBudget& b);
json to_json(const powersweep::GroupStats& g);
json to_json(const nonlin::NonlinExtraction& x);
json to_json(const nonlin::WeightedEstimate& w);
json to_json(const kinetic::InverseAlphaFit& k);
json to_json(const xrd::FittedPeak& p);
json to_json(const xrd::LatticeResult& l);

const char* unwrap_mode_name(respipe::UnwrapMode m);
respipe::UnwrapMode parse_unwrap_mode(const std::string& s);

} // namespace reskit::app
