// phenoatlas.hpp: umbrella header.
#pragma once

#include <phenoatlas/atlas.hpp>
#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>
#include <phenoatlas/composition.hpp>
#include <phenoatlas/cox.hpp>
#include <phenoatlas/evaluation.hpp>
#include <phenoatlas/knn_graph.hpp>
#include <phenoatlas/leiden.hpp>
#include <phenoatlas/logistic.hpp>
#include <phenoatlas/pipeline.hpp>
#include <phenoatlas/ssl_loss.hpp>
#include <phenoatlas/stats.hpp>
#include <phenoatlas/survival_curves.hpp>
#include <phenoatlas/synth.hpp>
