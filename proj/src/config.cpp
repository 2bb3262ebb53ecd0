namespace fedbench {}
