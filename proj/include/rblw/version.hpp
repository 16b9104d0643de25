#pragma once

#define RBLW_VERSION "0.1.0"
