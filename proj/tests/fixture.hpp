#pragma once

#include "netred/network.hpp"

namespace netred::fixtures {

// Four-subsystem positive network with three states per subsystem.
inline NetworkSystem fixture_network() {
  NetworkSystem sys;
  sys.A.resize(12, 12);
  sys.A << -4.6, 1, 0, 0.1, 0.05, 0.02, 0.01, 0, 0, 0, 0, 0,
      0, -4.6, 1, 0.1, 0.21, 0.1, 0, 0.05, 0, 0, 0, 0,
      0.4714, 0.1953, -4.2667, 0, 0.09, 0.08, 0, 0, 0.02, 0, 0, 0,
      0.1, 0, 0.33, -4.23, 0, 0.2, 0.1, 0, 0, 0, 0, 0,
      0.2, 0.02, 0, 0.1, -4.598, 0, 0, 0.02, 0, 0, 0, 0,
      0.1, 0, 0.16, 0, 0.121, -7.19, 0, 0, 0.05, 0, 0, 0,
      0.5324, 0.3365, 0.4039, 0.5527, 0.2431, 0.9357, -3.3242, 0.0012, 0.6253, 0.2874, 0.7624, 0.6455,
      0.7165, 0.1877, 0.5486, 0.2748, 0.1542, 0.8187, 0.3604, -3.1836, 0.5431, 0.5017, 0.5761, 0.1232,
      0.1793, 0.3219, 0.0487, 0.2415, 0.9564, 0.7283, 0.1888, 0.6996, -3.061, 0.7615, 0.7477, 0.5044,
      0, 0, 0, 0, 0, 0, 0.3473, 0.1982, 0.6944, -2.9677, 0.9064, 0.6714,
      0, 0, 0, 0, 0, 0, 0.0921, 0.6723, 0.2568, 0.2794, -3.1073, 0.8372,
      0, 0, 0, 0, 0, 0, 0.1478, 0.4315, 0.0098, 0.9462, 0.0249, -2.5285;
  sys.B.resize(12, 1);
  sys.B << 0.0569, 0.4503, 0.5825, 0.6866, 0.7194, 0.65, 0.7269, 0.3738, 0.5816, 0.1161, 0.0577, 0.9798;
  sys.C.resize(1, 12);
  sys.C << 0.2848, 0.595, 0.9622, 0.1858, 0.193, 0.3416, 0.9329, 0.3907, 0.2732, 0.1519, 0.3971, 0.3747;
  sys.topology.N = 4;
  sys.topology.sizes = {3, 3, 3, 3};
  sys.topology.state_neighbors = {{0, 1, 2}, {0, 1, 2}, {0, 1, 2, 3}, {2, 3}};
  sys.topology.m = 1;
  sys.topology.p = 1;
  return sys;
}

inline Matrix fixture_L() {
  Matrix L(1, 4);
  L << 0, 0, 0, 1;
  return L;
}

inline ReducedOrders fixture_orders() { return ReducedOrders{{1, 1, 1, 1}}; }

}  // namespace netred::fixtures
