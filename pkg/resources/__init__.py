# Problem instances: domain types, generators, file formats
