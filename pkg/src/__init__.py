# Makes src a package

